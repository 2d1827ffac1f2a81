//! De-identification of temporal 3D point-cloud sequences with a graph
//! autoencoder trained against frozen gesture and identity classifiers.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
