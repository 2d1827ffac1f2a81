//! Comparison anonymizers: point-level perturbations and established
//! privacy transforms, each deterministic under `(grid, spec)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gaussian,
    Uniform,
    RandomPerturb,
    Scale,
    Rotation,
    FeatureObfuscation,
    Quantization,
    Laplacian,
    KAnonymity,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Gaussian,
        Method::Uniform,
        Method::RandomPerturb,
        Method::Scale,
        Method::Rotation,
        Method::FeatureObfuscation,
        Method::Quantization,
        Method::Laplacian,
        Method::KAnonymity,
    ];

    /// Methods that move individual points geometrically.
    pub const POINT_LEVEL: [Method; 5] =
        [Method::Gaussian, Method::Uniform, Method::RandomPerturb, Method::Scale, Method::Rotation];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gaussian => "gaussian",
            Method::Uniform => "uniform",
            Method::RandomPerturb => "random_perturb",
            Method::Scale => "scale",
            Method::Rotation => "rotation",
            Method::FeatureObfuscation => "feature_obfuscation",
            Method::Quantization => "quantization",
            Method::Laplacian => "laplacian",
            Method::KAnonymity => "k_anonymity",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline method `{s}`")))
    }
}

/// Method parameters. Lengths are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub sigma: f64,
    pub uniform_a: f64,
    pub radius: f64,
    pub scale_s: f64,
    pub theta_deg: f64,
    pub rho: f64,
    pub q: f64,
    pub laplace_b: f64,
    pub kappa: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            uniform_a: 0.05,
            radius: 0.05,
            scale_s: 0.1,
            theta_deg: 15.0,
            rho: 0.2,
            q: 0.1,
            laplace_b: 0.2,
            kappa: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub method: Method,
    pub params: BaselineParams,
    pub seed: u64,
}

impl BaselineSpec {
    pub fn new(method: Method, seed: u64) -> Self {
        Self { method, params: BaselineParams::default(), seed }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let nonneg = [("sigma", p.sigma), ("uniform_a", p.uniform_a), ("radius", p.radius), ("theta_deg", p.theta_deg), ("laplace_b", p.laplace_b)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0")));
            }
        }
        if !(0.0..1.0).contains(&p.scale_s) {
            return Err(Error::Config("scale_s must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&p.rho) {
            return Err(Error::Config("rho must lie in [0, 1]".into()));
        }
        if !(p.q > 0.0 && p.q.is_finite()) {
            return Err(Error::Config("q must be > 0".into()));
        }
        if p.kappa == 0 {
            return Err(Error::Config("kappa must be >= 1".into()));
        }
        Ok(())
    }
}

fn grid_stream(grid: &FrameGrid) -> u64 {
    // FNV-1a over the id, so every sequence draws its own noise.
    grid.id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn centroid(points: &[f64]) -> [f64; 3] {
    let n = (points.len() / 3) as f64;
    let mut c = [0.0; 3];
    for p in points.chunks_exact(3) {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    c.map(|v| v / n)
}

/// Rotates every point about the vertical (z) axis through the sequence
/// centroid.
pub fn rotate_about_vertical(grid: &FrameGrid, angle: f64) -> Result<FrameGrid> {
    let c = centroid(grid.coords());
    let (s, co) = angle.sin_cos();
    let mut out = grid.coords().to_vec();
    for p in out.chunks_exact_mut(3) {
        let (x, y) = (p[0] - c[0], p[1] - c[1]);
        p[0] = c[0] + co * x - s * y;
        p[1] = c[1] + s * x + co * y;
    }
    let mut out = grid.with_coords(out)?;
    out.round_to_f32();
    Ok(out)
}

/// Greedy nearest-neighbour micro-aggregation of one frame: the lowest
/// unassigned point and its `kappa - 1` nearest unassigned neighbours form
/// a group, and every member becomes the group centroid.
fn micro_aggregate(frame: &mut [f64], kappa: usize) {
    let n = frame.len() / 3;
    let pt = |f: &[f64], i: usize| [f[3 * i], f[3 * i + 1], f[3 * i + 2]];
    let mut assigned = vec![false; n];
    let mut groups = Vec::new();
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        let s = pt(frame, seed);
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| !assigned[j] && j != seed)
            .map(|j| {
                let q = pt(frame, j);
                ((0..3).map(|d| (q[d] - s[d]).powi(2)).sum(), j)
            })
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut group = vec![seed];
        group.extend(cand.iter().take(kappa - 1).map(|c| c.1));
        for &g in &group {
            assigned[g] = true;
        }
        groups.push(group);
    }
    for group in groups {
        let mut c = [0.0; 3];
        for &g in &group {
            for d in 0..3 {
                c[d] += frame[3 * g + d];
            }
        }
        let c = c.map(|v| v / group.len() as f64);
        for &g in &group {
            frame[3 * g..3 * g + 3].copy_from_slice(&c);
        }
    }
}

/// Applies one baseline to a grid. Frame structure, ids and labels are kept,
/// and coordinates are rounded to `f32` like every stored grid.
pub fn perturb(grid: &FrameGrid, spec: &BaselineSpec) -> Result<FrameGrid> {
    spec.validate()?;
    let p = &spec.params;
    let mut rng = rng_for(derive_seed(spec.seed, grid_stream(grid)), spec.method as u64);
    let mut out = grid.coords().to_vec();
    let per_frame = grid.points_per_frame() * 3;
    match spec.method {
        Method::Gaussian => {
            let normal = Normal::new(0.0, p.sigma).map_err(|e| Error::Config(e.to_string()))?;
            out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
        Method::Uniform => {
            if p.uniform_a > 0.0 {
                out.iter_mut().for_each(|v| *v += rng.random_range(-p.uniform_a..p.uniform_a));
            }
        }
        Method::RandomPerturb => {
            for pt in out.chunks_exact_mut(3) {
                let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                for d in 0..3 {
                    pt[d] += p.radius * dir[d];
                }
            }
        }
        Method::Scale => {
            let factor = if p.scale_s > 0.0 { rng.random_range(1.0 - p.scale_s..1.0 + p.scale_s) } else { 1.0 };
            let c = centroid(grid.coords());
            for pt in out.chunks_exact_mut(3) {
                for d in 0..3 {
                    pt[d] = c[d] + factor * (pt[d] - c[d]);
                }
            }
        }
        Method::Rotation => {
            let theta = p.theta_deg * PI / 180.0;
            let angle = if theta > 0.0 { rng.random_range(-theta..theta) } else { 0.0 };
            let mut out = rotate_about_vertical(grid, angle)?;
            out.round_to_f32();
            return Ok(out);
        }
        Method::FeatureObfuscation => {
            for frame in out.chunks_exact_mut(per_frame) {
                let c = centroid(frame);
                for pt in frame.chunks_exact_mut(3) {
                    if rng.random_bool(p.rho) {
                        pt.copy_from_slice(&c);
                    }
                }
            }
        }
        Method::Quantization => {
            out.iter_mut().for_each(|v| *v = (*v / p.q).round() * p.q);
        }
        Method::Laplacian => {
            if p.laplace_b > 0.0 {
                let exp = Exp::new(1.0 / p.laplace_b).map_err(|e| Error::Config(e.to_string()))?;
                for v in out.iter_mut() {
                    let mag: f64 = exp.sample(&mut rng);
                    *v += if rng.random_bool(0.5) { mag } else { -mag };
                }
            }
        }
        Method::KAnonymity => {
            for frame in out.chunks_exact_mut(per_frame) {
                micro_aggregate(frame, p.kappa);
            }
        }
    }
    let mut out = grid.with_coords(out)?;
    out.round_to_f32();
    Ok(out)
}

pub fn perturb_all(grids: &[FrameGrid], spec: &BaselineSpec) -> Result<Vec<FrameGrid>> {
    use rayon::prelude::*;
    grids.par_iter().map(|g| perturb(g, spec)).collect()
}
