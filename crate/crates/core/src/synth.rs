//! Deterministic synthetic gesture recordings.
//!
//! Gesture class is carried by the hand-center trajectory shape. Subject
//! identity is carried by a per-subject geometric profile (scale, resting
//! offset, execution speed, tremor) applied on top of the trajectory. All
//! within-cell variation is proportional to `noise_sigma`, so a zero-noise
//! spec yields identical sequences within each (subject, gesture) cell.
//!
//! Axes: x lateral, y depth (away from the sensor), z vertical; meters.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetHeader, RawPoint, Sequence};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

pub const GESTURE_FAMILIES: [&str; 8] = [
    "line-swipe",
    "circle",
    "push-pull",
    "zigzag",
    "arc",
    "figure-eight",
    "raise-lower",
    "spiral",
];

/// Standard deviation of the hand blob around the trajectory center.
const HAND_SPREAD: f64 = 0.04;
/// Nominal distance of the resting hand from the sensor.
const RANGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects: usize,
    pub gestures: usize,
    pub sequences_per_cell: usize,
    pub frames: usize,
    pub points_per_frame: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects: 8,
            gestures: 6,
            sequences_per_cell: 40,
            frames: 32,
            points_per_frame: 32,
            noise_sigma: 0.02,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gestures > GESTURE_FAMILIES.len() {
            return Err(Error::UnsupportedGestureCount(self.gestures));
        }
        if self.subjects == 0
            || self.gestures == 0
            || self.sequences_per_cell == 0
            || self.frames == 0
            || self.points_per_frame == 0
        {
            return Err(Error::Config("synthetic dataset counts must all be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be a finite value >= 0".into()));
        }
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader { subjects: self.subjects, gestures: self.gestures }
    }
}

/// Person-specific execution pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub scale: f64,
    pub offset: [f64; 3],
    pub speed: f64,
    pub tremor_sigma: f64,
    /// Tremor oscillation cycles per recording.
    pub tremor_cycles: f64,
    pub tremor_phase: f64,
}

impl SubjectProfile {
    pub fn neutral() -> Self {
        Self { scale: 1.0, offset: [0.0; 3], speed: 1.0, tremor_sigma: 0.0, tremor_cycles: 0.0, tremor_phase: 0.0 }
    }

    pub fn for_subject(seed: u64, subject: usize) -> Self {
        let mut rng = rng_for(seed, 1_000_000 + subject as u64);
        Self {
            scale: rng.random_range(0.8..=1.2),
            offset: [
                rng.random_range(-0.15..=0.15),
                rng.random_range(-0.15..=0.15),
                rng.random_range(-0.15..=0.15),
            ],
            speed: rng.random_range(0.8..=1.2),
            tremor_sigma: rng.random_range(0.003..=0.015),
            tremor_cycles: rng.random_range(2.0..=6.0),
            tremor_phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    /// Maps a canonical (neutral-profile) point at frame `frame` of `frames`
    /// into this subject's space.
    pub fn apply(&self, canonical: [f64; 3], frame: usize, frames: usize) -> [f64; 3] {
        let tau = frame as f64 / frames.max(1) as f64;
        let tremor = self.tremor_sigma * (2.0 * PI * self.tremor_cycles * tau + self.tremor_phase).sin();
        [
            self.offset[0] + self.scale * canonical[0] + tremor,
            self.offset[1] + self.scale * canonical[1] + RANGE * (1.0 - self.scale),
            self.offset[2] + self.scale * canonical[2] - tremor,
        ]
    }
}

/// Hand-center position of a gesture family at phase `u` in [0, 1],
/// relative to a resting point `RANGE` meters in front of the sensor.
pub fn trajectory(gesture: usize, u: f64) -> [f64; 3] {
    let u = u.clamp(0.0, 1.0);
    let (x, dy, z) = match gesture {
        0 => (-0.25 + 0.5 * u, 0.0, 0.0),
        1 => (0.15 * (2.0 * PI * u).cos(), 0.0, 0.15 * (2.0 * PI * u).sin()),
        2 => (0.0, -0.25 * (PI * u).sin(), 0.0),
        3 => {
            let tri = 1.0 - (4.0 * u % 2.0 - 1.0).abs() * 2.0;
            (-0.25 + 0.5 * u, 0.0, 0.1 * tri)
        }
        4 => (0.25 * (PI * u).cos(), 0.0, 0.25 * (PI * u).sin()),
        5 => (0.2 * (2.0 * PI * u).sin(), 0.0, 0.1 * (4.0 * PI * u).sin()),
        6 => (0.0, 0.0, 0.25 * (PI * u).sin()),
        7 => {
            let r = 0.05 + 0.15 * u;
            (r * (4.0 * PI * u).cos(), -0.1 * u, r * (4.0 * PI * u).sin())
        }
        _ => panic!("gesture family {gesture} does not exist"),
    };
    [x, RANGE + dy, z]
}

/// Gesture phase reached at `frame` for a given execution speed.
pub fn phase(frame: usize, frames: usize, speed: f64) -> f64 {
    if frames <= 1 {
        return 0.0;
    }
    (speed * frame as f64 / (frames - 1) as f64).clamp(0.0, 1.0)
}

/// Raw point count emitted for a frame; varies around `P` so preprocessing
/// exercises both reduction and augmentation.
pub fn raw_count(points_per_frame: usize, gesture: usize, frame: usize) -> usize {
    let p = points_per_frame;
    let span = p / 2 + 1;
    (p + (frame * 7 + gesture * 3) % span).saturating_sub(p / 4).max(1)
}

/// Fixed hand-blob offsets for `(gesture, frame)`.
pub fn hand_template(seed: u64, gesture: usize, frame: usize, count: usize) -> Vec<[f64; 3]> {
    let mut rng = rng_for(derive_seed(seed, 500 + gesture as u64), frame as u64);
    (0..count)
        .map(|_| {
            let v: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            [v[0] * HAND_SPREAD, v[1] * HAND_SPREAD * 0.5, v[2] * HAND_SPREAD]
        })
        .collect()
}

/// One recording of `gesture` by a subject with `profile`.
pub fn generate_sequence(
    spec: &SynthSpec,
    profile: &SubjectProfile,
    subject: usize,
    gesture: usize,
    index: usize,
    id: String,
) -> Sequence {
    let mut rng = rng_for(spec.seed, 2_000_000 + index as u64);
    let sigma = spec.noise_sigma;
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let amp = 1.0 + 4.0 * sigma * gauss(&mut rng);
    let speed_jitter = 1.0 + 2.0 * sigma * gauss(&mut rng);
    let shift = [1.5 * sigma * gauss(&mut rng), 1.5 * sigma * gauss(&mut rng), 1.5 * sigma * gauss(&mut rng)];

    let mut points = Vec::new();
    for f in 0..spec.frames {
        let u = phase(f, spec.frames, profile.speed * speed_jitter);
        let center = trajectory(gesture, u);
        let count = raw_count(spec.points_per_frame, gesture, f);
        for off in hand_template(spec.seed, gesture, f, count) {
            let canonical = [
                (center[0] + off[0]) * amp + shift[0] + sigma * gauss(&mut rng),
                RANGE + (center[1] - RANGE + off[1]) * amp + shift[1] + sigma * gauss(&mut rng),
                (center[2] + off[2]) * amp + shift[2] + sigma * gauss(&mut rng),
            ];
            let [x, y, z] = profile.apply(canonical, f, spec.frames);
            points.push(RawPoint { x, y, z, t: f as u32 + 1 });
        }
    }
    Sequence { id, subject, gesture, points }
}

/// `S * G * sequences_per_cell` sequences ordered by subject, gesture, repetition.
pub fn generate_dataset(spec: &SynthSpec) -> Result<Vec<Sequence>> {
    spec.validate()?;
    let profiles: Vec<SubjectProfile> =
        (0..spec.subjects).map(|s| SubjectProfile::for_subject(spec.seed, s)).collect();
    let mut out = Vec::with_capacity(spec.subjects * spec.gestures * spec.sequences_per_cell);
    let mut index = 0;
    for (s, profile) in profiles.iter().enumerate() {
        for g in 0..spec.gestures {
            for r in 0..spec.sequences_per_cell {
                out.push(generate_sequence(spec, profile, s, g, index, format!("s{s}-g{g}-r{r}")));
                index += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_sequences;

    fn small() -> SynthSpec {
        SynthSpec { subjects: 3, gestures: 4, sequences_per_cell: 2, frames: 8, points_per_frame: 6, noise_sigma: 0.02, seed: 1 }
    }

    #[test]
    fn count_is_product() {
        let spec = SynthSpec { frames: 4, points_per_frame: 4, ..SynthSpec::default() };
        assert_eq!(generate_dataset(&spec).unwrap().len(), 8 * 6 * 40);
    }

    #[test]
    fn too_many_gestures() {
        let spec = SynthSpec { gestures: 9, ..small() };
        assert!(matches!(generate_dataset(&spec), Err(Error::UnsupportedGestureCount(9))));
    }

    #[test]
    fn byte_identical_output() {
        let spec = small();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sequences(&mut a, &spec.header(), &generate_dataset(&spec).unwrap()).unwrap();
        write_sequences(&mut b, &spec.header(), &generate_dataset(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_cells_are_identical() {
        let spec = SynthSpec { noise_sigma: 0.0, ..small() };
        let seqs = generate_dataset(&spec).unwrap();
        for pair in seqs.chunks(2) {
            assert_eq!(pair[0].points, pair[1].points);
        }
    }

    #[test]
    fn zero_noise_subjects_differ_by_profile_transform() {
        let spec = SynthSpec { noise_sigma: 0.0, ..small() };
        let a = SubjectProfile { scale: 0.9, offset: [0.1, -0.05, 0.02], speed: 1.0, ..SubjectProfile::neutral() };
        let b = SubjectProfile { scale: 1.15, offset: [-0.12, 0.08, 0.0], speed: 0.85, ..SubjectProfile::neutral() };
        let gesture = 1;
        let sa = generate_sequence(&spec, &a, 0, gesture, 0, "a".into());
        let sb = generate_sequence(&spec, &b, 1, gesture, 1, "b".into());
        assert_eq!(sa.points.len(), sb.points.len());

        let mut k = 0;
        for f in 0..spec.frames {
            let count = raw_count(spec.points_per_frame, gesture, f);
            let blob = hand_template(spec.seed, gesture, f, count);
            let ca = trajectory(gesture, (a.speed * f as f64 / (spec.frames - 1) as f64).min(1.0));
            let cb = trajectory(gesture, (b.speed * f as f64 / (spec.frames - 1) as f64).min(1.0));
            for off in blob {
                // y is stored relative to the sensor; scale acts about the resting range.
                let expect = |c: [f64; 3], p: &SubjectProfile| {
                    [
                        p.offset[0] + p.scale * (c[0] + off[0]),
                        p.offset[1] + RANGE + p.scale * (c[1] - RANGE + off[1]),
                        p.offset[2] + p.scale * (c[2] + off[2]),
                    ]
                };
                let ea = expect(ca, &a);
                let eb = expect(cb, &b);
                for d in 0..3 {
                    assert!((sa.points[k].xyz()[d] - ea[d]).abs() < 1e-12);
                    assert!((sb.points[k].xyz()[d] - eb[d]).abs() < 1e-12);
                }
                k += 1;
            }
        }
    }

    #[test]
    fn raw_counts_straddle_target() {
        let counts: Vec<usize> = (0..32).map(|f| raw_count(32, 2, f)).collect();
        assert!(counts.iter().any(|&c| c < 32));
        assert!(counts.iter().any(|&c| c > 32));
    }

    #[test]
    fn profiles_within_ranges() {
        for s in 0..50 {
            let p = SubjectProfile::for_subject(9, s);
            assert!((0.8..=1.2).contains(&p.scale));
            assert!((0.8..=1.2).contains(&p.speed));
        }
    }

    #[test]
    fn subject_signal_beats_chance_with_nearest_centroid() {
        let spec = SynthSpec { sequences_per_cell: 6, frames: 8, points_per_frame: 8, ..SynthSpec::default() };
        let seqs = generate_dataset(&spec).unwrap();
        let mean = |s: &Sequence| {
            let n = s.points.len() as f64;
            let mut m = [0.0; 3];
            for p in &s.points {
                for (d, v) in p.xyz().iter().enumerate() {
                    m[d] += v / n;
                }
            }
            m
        };
        // Fit centroids on even repetitions, score odd ones.
        let mut cent = vec![[0.0; 3]; spec.subjects];
        let mut cnt = vec![0.0; spec.subjects];
        for (i, s) in seqs.iter().enumerate() {
            if i % 2 == 0 {
                let m = mean(s);
                for d in 0..3 {
                    cent[s.subject][d] += m[d];
                }
                cnt[s.subject] += 1.0;
            }
        }
        for (c, n) in cent.iter_mut().zip(&cnt) {
            for v in c.iter_mut() {
                *v /= n;
            }
        }
        let mut correct = 0;
        let mut total = 0;
        for (i, s) in seqs.iter().enumerate() {
            if i % 2 == 1 {
                let m = mean(s);
                let pred = (0..spec.subjects)
                    .min_by(|&a, &b| {
                        let da: f64 = (0..3).map(|d| (m[d] - cent[a][d]).powi(2)).sum();
                        let db: f64 = (0..3).map(|d| (m[d] - cent[b][d]).powi(2)).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                correct += (pred == s.subject) as usize;
                total += 1;
            }
        }
        assert!(correct as f64 / total as f64 > 1.0 / spec.subjects as f64 * 2.0);
    }
}
