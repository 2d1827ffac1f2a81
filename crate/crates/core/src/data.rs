//! Sequence ingestion, frame bucketing, per-frame resampling and dataset splits.
//!
//! A [`Sequence`] is a raw labeled recording in reception order. Preprocessing
//! turns it into a [`FrameGrid`]: `F` frames of exactly `P` points each, stored
//! frame-major as `F * P * 3` coordinates.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

pub const SEQ_FORMAT: &str = "immcognito-seq";
pub const SEQ_VERSION: u32 = 1;
pub const GRID_MAGIC: &[u8; 4] = b"IMCG";
pub const GRID_VERSION: u32 = 1;

const KMEANS_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Frame index (1-based) or raw reception order index.
    pub t: u32,
}

impl RawPoint {
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub subject: usize,
    pub gesture: usize,
    pub points: Vec<RawPoint>,
}

/// Label ranges declared by the first record of a sequence file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub subjects: usize,
    pub gestures: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    format: String,
    version: u32,
    subjects: usize,
    gestures: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    id: String,
    subject: usize,
    gesture: usize,
    points: Vec<(f64, f64, f64, u32)>,
}

/// Canonical `F x P x 3` coordinate array for one labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub id: String,
    pub subject: usize,
    pub gesture: usize,
    frames: usize,
    points_per_frame: usize,
    coords: Vec<f64>,
}

impl FrameGrid {
    pub fn new(
        id: impl Into<String>,
        subject: usize,
        gesture: usize,
        frames: usize,
        points_per_frame: usize,
        coords: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 || points_per_frame == 0 {
            return Err(Error::Validation("grid needs at least one frame and one point".into()));
        }
        if coords.len() != frames * points_per_frame * 3 {
            return Err(Error::Validation(format!(
                "grid of {frames}x{points_per_frame} needs {} coordinates, got {}",
                frames * points_per_frame * 3,
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("grid coordinates must be finite".into()));
        }
        Ok(Self { id: id.into(), subject, gesture, frames, points_per_frame, coords })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points_per_frame(&self) -> usize {
        self.points_per_frame
    }

    /// Total node count `N = F * P`.
    pub fn len(&self) -> usize {
        self.frames * self.points_per_frame
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, node: usize) -> [f64; 3] {
        let c = &self.coords[node * 3..node * 3 + 3];
        [c[0], c[1], c[2]]
    }

    /// 1-based frame index of a node.
    pub fn frame_of(&self, node: usize) -> usize {
        node / self.points_per_frame + 1
    }

    /// Same labels and layout, different coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.id.clone(), self.subject, self.gesture, self.frames, self.points_per_frame, coords)
    }

    /// Rounds every coordinate to the nearest `f32` so the grid survives the
    /// binary file format unchanged.
    pub fn round_to_f32(&mut self) {
        for c in &mut self.coords {
            *c = *c as f32 as f64;
        }
    }
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<Sequence>)> {
    let file = File::open(path.as_ref())?;
    read_sequences(BufReader::new(file))
}

pub fn read_sequences<R: BufRead>(reader: R) -> Result<(DatasetHeader, Vec<Sequence>)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::Parse { line: 1, message: "missing header record".into() }),
            Some((idx, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: HeaderRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Parse { line: idx + 1, message: format!("bad header: {e}") })?;
                if rec.format != SEQ_FORMAT || rec.version != SEQ_VERSION {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("unsupported format {} v{}", rec.format, rec.version),
                    });
                }
                if rec.subjects == 0 || rec.gestures == 0 {
                    return Err(Error::Parse { line: idx + 1, message: "label ranges must be positive".into() });
                }
                break DatasetHeader { subjects: rec.subjects, gestures: rec.gestures };
            }
        }
    };

    let mut seqs = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let rec: SequenceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let seq = Sequence {
            id: rec.id,
            subject: rec.subject,
            gesture: rec.gesture,
            points: rec.points.into_iter().map(|(x, y, z, t)| RawPoint { x, y, z, t }).collect(),
        };
        validate_sequence(&seq, &header)
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        seqs.push(seq);
    }
    Ok((header, seqs))
}

fn validate_sequence(seq: &Sequence, header: &DatasetHeader) -> std::result::Result<(), String> {
    if seq.subject >= header.subjects {
        return Err(format!("subject {} outside 0..{}", seq.subject, header.subjects));
    }
    if seq.gesture >= header.gestures {
        return Err(format!("gesture {} outside 0..{}", seq.gesture, header.gestures));
    }
    if seq.points.is_empty() {
        return Err(format!("sequence {} has no points", seq.id));
    }
    for p in &seq.points {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(format!("sequence {} has a non-finite coordinate", seq.id));
        }
        if p.t < 1 {
            return Err(format!("sequence {} has a point with t < 1", seq.id));
        }
    }
    Ok(())
}

pub fn write_sequences<W: Write>(mut out: W, header: &DatasetHeader, seqs: &[Sequence]) -> Result<()> {
    let head = HeaderRecord {
        format: SEQ_FORMAT.into(),
        version: SEQ_VERSION,
        subjects: header.subjects,
        gestures: header.gestures,
    };
    writeln!(out, "{}", serde_json::to_string(&head).expect("header serializes"))?;
    for s in seqs {
        let rec = SequenceRecord {
            id: s.id.clone(),
            subject: s.subject,
            gesture: s.gesture,
            points: s.points.iter().map(|p| (p.x, p.y, p.z, p.t)).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_sequences(path: impl AsRef<Path>, header: &DatasetHeader, seqs: &[Sequence]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_sequences(BufWriter::new(file), header, seqs)
}

/// Splits a sequence into `frames` consecutive segments of reception order.
///
/// Frame `i` (0-based) takes the points with indices in
/// `[floor(i*N/F), floor((i+1)*N/F))`; each point's `t` becomes `i + 1`.
pub fn bucket_frames(seq: &Sequence, frames: usize) -> Vec<Vec<RawPoint>> {
    assert!(frames >= 1, "frame count must be positive");
    let n = seq.points.len();
    (0..frames)
        .map(|i| {
            let lo = i * n / frames;
            let hi = (i + 1) * n / frames;
            seq.points[lo..hi].iter().map(|p| RawPoint { t: i as u32 + 1, ..*p }).collect()
        })
        .collect()
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Resamples one frame to exactly `target` points.
///
/// Larger frames are reduced to k-means centroids; smaller ones grow by
/// repeatedly inserting the midpoint of the closest pair. An empty frame
/// copies `previous` (the already resampled preceding frame) or, for the
/// first frame, the origin.
pub fn resample_frame(
    frame: &[[f64; 3]],
    target: usize,
    seed: u64,
    previous: Option<&[[f64; 3]]>,
) -> Vec<[f64; 3]> {
    assert!(target >= 1, "target point count must be positive");
    match frame.len() {
        0 => match previous {
            Some(prev) if prev.len() == target => prev.to_vec(),
            Some(prev) if !prev.is_empty() => resample_frame(prev, target, seed, None),
            _ => vec![[0.0; 3]; target],
        },
        n if n == target => frame.to_vec(),
        n if n > target => kmeans(frame, target, seed).centroids,
        _ => augment_midpoints(frame, target),
    }
}

/// Result of [`kmeans`]: centroids plus the final assignment that produced them.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Vec<[f64; 3]>,
    pub assignment: Vec<usize>,
}

/// Lloyd's k-means with deterministic farthest-point seeding.
///
/// The first center is drawn from `seed`; each further center is the unchosen
/// point farthest from all chosen centers. Ties go to the lowest index, both
/// when seeding and when assigning. Empty clusters keep their last center.
pub fn kmeans(points: &[[f64; 3]], k: usize, seed: u64) -> KMeans {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n");
    let mut rng = rng_for(seed, 0);
    let first = rng.random_range(0..n);

    let mut chosen = vec![false; n];
    let mut centers = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..k {
        chosen[next] = true;
        centers.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, &points[next]));
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => next = b,
            None => break,
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for d in 0..3 {
                sums[c][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                centers[c] = [sums[c][0] / inv, sums[c][1] / inv, sums[c][2] / inv];
            }
        }
        if !changed {
            break;
        }
    }
    KMeans { centroids: centers, assignment }
}

fn augment_midpoints(frame: &[[f64; 3]], target: usize) -> Vec<[f64; 3]> {
    let mut pts = frame.to_vec();
    if pts.len() == 1 {
        pts.push(pts[0]);
    }
    while pts.len() < target {
        let mut best = (0, 1);
        let mut best_d = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = sq_dist(&pts[i], &pts[j]);
                if d < best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        let (a, b) = (pts[best.0], pts[best.1]);
        pts.push([(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5]);
    }
    pts.truncate(target);
    pts
}

/// Buckets and resamples a sequence into an `F x P` grid.
pub fn sequence_to_grid(seq: &Sequence, frames: usize, points: usize, seed: u64) -> Result<FrameGrid> {
    if seq.points.is_empty() {
        return Err(Error::Validation(format!("sequence {} has no points", seq.id)));
    }
    if frames == 0 || points == 0 {
        return Err(Error::Config("frames and points per frame must be positive".into()));
    }
    let buckets = bucket_frames(seq, frames);
    let mut coords = Vec::with_capacity(frames * points * 3);
    let mut prev: Option<Vec<[f64; 3]>> = None;
    for (i, bucket) in buckets.iter().enumerate() {
        let raw: Vec<[f64; 3]> = bucket.iter().map(RawPoint::xyz).collect();
        let frame = resample_frame(&raw, points, derive_seed(seed, i as u64), prev.as_deref());
        coords.extend(frame.iter().flat_map(|p| p.iter().copied()));
        prev = Some(frame);
    }
    let mut grid = FrameGrid::new(seq.id.clone(), seq.subject, seq.gesture, frames, points, coords)?;
    grid.round_to_f32();
    Ok(grid)
}

/// Outcome of a stratified split; `warnings` lists strata too small to split.
#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub warnings: Vec<String>,
}

/// Stratified split on an arbitrary `(gesture, subject)`-style key.
///
/// Each stratum of size `n >= 2` sends `round(n * fraction)` items (clamped to
/// `1..=n-1`) to train; singleton strata go to train with a warning. Both
/// outputs keep input order.
pub fn split_stratified<T: Clone>(
    items: &[T],
    key: impl Fn(&T) -> (usize, usize),
    train_fraction: f64,
    seed: u64,
) -> Result<Split<T>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        strata.entry(key(item)).or_default().push(i);
    }
    let mut in_train = vec![false; items.len()];
    let mut warnings = Vec::new();
    for (&(a, b), members) in &strata {
        let n = members.len();
        if n == 1 {
            in_train[members[0]] = true;
            warnings.push(format!("stratum ({a}, {b}) has a single item; assigned to train"));
            continue;
        }
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        let mut order = members.clone();
        let mut rng = rng_for(seed, ((a as u64) << 32) ^ b as u64);
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &idx in &order[..n_train] {
            in_train[idx] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if in_train[i] {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok(Split { train, test, warnings })
}

/// Stratified by `(gesture, subject)`.
pub fn split_dataset(seqs: &[Sequence], train_fraction: f64, seed: u64) -> Result<Split<Sequence>> {
    split_stratified(seqs, |s| (s.gesture, s.subject), train_fraction, seed)
}

pub fn split_grids(grids: &[FrameGrid], train_fraction: f64, seed: u64) -> Result<Split<FrameGrid>> {
    split_stratified(grids, |g| (g.gesture, g.subject), train_fraction, seed)
}

pub fn write_grids<W: Write>(mut out: W, grids: &[FrameGrid]) -> Result<()> {
    let (frames, points) = match grids.first() {
        Some(g) => (g.frames, g.points_per_frame),
        None => (0, 0),
    };
    if grids.iter().any(|g| g.frames != frames || g.points_per_frame != points) {
        return Err(Error::Validation("all grids in a file must share F and P".into()));
    }
    out.write_all(GRID_MAGIC)?;
    for v in [GRID_VERSION, grids.len() as u32, frames as u32, points as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for g in grids {
        out.write_all(&(g.subject as u32).to_le_bytes())?;
        out.write_all(&(g.gesture as u32).to_le_bytes())?;
        for &c in &g.coords {
            out.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_grids(path: impl AsRef<Path>, grids: &[FrameGrid]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_grids(BufWriter::new(file), grids)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated grid file: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

/// Reads a grid file; grids are named `grid-<index>` since the format
/// stores no identifiers.
pub fn read_grids<R: Read>(mut r: R) -> Result<Vec<FrameGrid>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("missing magic".into()))?;
    if &magic != GRID_MAGIC {
        return Err(Error::Format("bad magic, expected IMCG".into()));
    }
    let version = read_u32(&mut r)?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let frames = read_u32(&mut r)? as usize;
    let points = read_u32(&mut r)? as usize;
    let per = frames * points * 3;
    let mut buf = vec![0u8; per * 4];
    let mut grids = Vec::with_capacity(count);
    for idx in 0..count {
        let subject = read_u32(&mut r)? as usize;
        let gesture = read_u32(&mut r)? as usize;
        r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated grid {idx}: {e}")))?;
        let coords = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        grids.push(FrameGrid::new(format!("grid-{idx}"), subject, gesture, frames, points, coords)?);
    }
    Ok(grids)
}

pub fn load_grids(path: impl AsRef<Path>) -> Result<Vec<FrameGrid>> {
    let file = File::open(path.as_ref())?;
    read_grids(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_of(n: usize) -> Sequence {
        Sequence {
            id: "s".into(),
            subject: 0,
            gesture: 0,
            points: (0..n)
                .map(|i| RawPoint { x: i as f64, y: 0.0, z: 0.0, t: i as u32 + 1 })
                .collect(),
        }
    }

    #[test]
    fn bucket_exact_division() {
        let frames = bucket_frames(&seq_of(64), 32);
        assert_eq!(frames.len(), 32);
        assert!(frames.iter().all(|f| f.len() == 2));
        let frames = bucket_frames(&seq_of(96), 32);
        assert!(frames.iter().all(|f| f.len() == 3));
    }

    #[test]
    fn bucket_uneven_uses_floor_boundaries() {
        // Boundaries floor(65*i/32) for i = 0..=32, enumerated independently.
        let bounds: Vec<usize> = (0..=32).map(|i| (65 * i) / 32).collect();
        let expected: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(expected.iter().filter(|&&s| s == 2).count(), 31);
        assert_eq!(expected.iter().filter(|&&s| s == 3).count(), 1);

        let frames = bucket_frames(&seq_of(65), 32);
        let sizes: Vec<usize> = frames.iter().map(Vec::len).collect();
        assert_eq!(sizes, expected);
        for (i, f) in frames.iter().enumerate() {
            assert!(f.iter().all(|p| p.t == i as u32 + 1));
        }
    }

    #[test]
    fn bucket_fewer_points_than_frames_leaves_empties() {
        let frames = bucket_frames(&seq_of(3), 8);
        assert_eq!(frames.iter().map(Vec::len).sum::<usize>(), 3);
        assert!(frames.iter().any(Vec::is_empty));
    }

    #[test]
    fn resample_identical_points_reduce_to_origin() {
        let out = resample_frame(&[[0.0; 3]; 4], 2, 11, None);
        assert_eq!(out, vec![[0.0; 3]; 2]);
    }

    #[test]
    fn resample_kmeans_line_case() {
        // Brute force both 2-partitions of {0,1,3}: {0,1}|{3} costs 0.5, {0}|{1,3} costs 2.
        for seed in 0..8 {
            let mut out = resample_frame(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]], 2, seed, None);
            out.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            assert_eq!(out, vec![[0.5, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        }
    }

    #[test]
    fn resample_single_point_duplicates() {
        let out = resample_frame(&[[1.0, 2.0, 3.0]], 3, 0, None);
        assert_eq!(out, vec![[1.0, 2.0, 3.0]; 3]);
    }

    #[test]
    fn resample_midpoint_insertion() {
        let out = resample_frame(&[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [5.0, 0.0, 0.0]], 4, 0, None);
        assert_eq!(out[3], [4.5, 0.0, 0.0]);
    }

    #[test]
    fn resample_empty_frame_uses_context() {
        let prev = vec![[1.0, 1.0, 1.0]; 3];
        assert_eq!(resample_frame(&[], 3, 0, Some(&prev)), prev);
        assert_eq!(resample_frame(&[], 2, 0, None), vec![[0.0; 3]; 2]);
    }

    #[test]
    fn sequence_to_grid_shape() {
        let g = sequence_to_grid(&seq_of(10), 4, 3, 1).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.frame_of(0), 1);
        assert_eq!(g.frame_of(11), 4);
    }

    #[test]
    fn missing_gesture_key_names_line() {
        let text = "{\"format\":\"immcognito-seq\",\"version\":1,\"subjects\":2,\"gestures\":2}\n\
                    {\"id\":\"a\",\"subject\":0,\"gesture\":1,\"points\":[[0,0,0,1]]}\n\
                    {\"id\":\"b\",\"subject\":0,\"points\":[[0,0,0,1]]}\n";
        match read_sequences(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("gesture"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_is_validation_error() {
        let text = "{\"format\":\"immcognito-seq\",\"version\":1,\"subjects\":2,\"gestures\":2}\n\
                    {\"id\":\"a\",\"subject\":5,\"gesture\":1,\"points\":[[0,0,0,1]]}\n";
        assert!(matches!(read_sequences(text.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn three_lines_load_in_order() {
        let mut text = String::from("{\"format\":\"immcognito-seq\",\"version\":1,\"subjects\":2,\"gestures\":2}\n");
        for id in ["x", "y", "z"] {
            text.push_str(&format!("{{\"id\":\"{id}\",\"subject\":1,\"gesture\":0,\"points\":[[0.5,0,0,1],[1,2,3,2]]}}\n"));
        }
        let (header, seqs) = read_sequences(text.as_bytes()).unwrap();
        assert_eq!(header, DatasetHeader { subjects: 2, gestures: 2 });
        let ids: Vec<_> = seqs.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);
    }

    fn cells(subjects: usize, gestures: usize, per: usize) -> Vec<Sequence> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for g in 0..gestures {
                for r in 0..per {
                    let mut seq = seq_of(1);
                    seq.id = format!("{s}-{g}-{r}");
                    seq.subject = s;
                    seq.gesture = g;
                    out.push(seq);
                }
            }
        }
        out
    }

    #[test]
    fn split_counts_per_stratum() {
        let seqs = cells(10, 10, 10);
        let split = split_dataset(&seqs, 0.7, 3).unwrap();
        assert_eq!(split.train.len(), 700);
        assert_eq!(split.test.len(), 300);
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for s in &split.train {
            *counts.entry((s.gesture, s.subject)).or_default() += 1;
        }
        assert!(counts.values().all(|&c| c == 7));
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn split_hundred_is_seventy_thirty() {
        let seqs = cells(2, 5, 10);
        let split = split_dataset(&seqs, 0.7, 9).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (70, 30));
    }

    #[test]
    fn split_is_deterministic_and_warns_on_singletons() {
        let mut seqs = cells(3, 2, 4);
        seqs.push(Sequence { id: "lonely".into(), subject: 9, gesture: 9, points: seq_of(1).points });
        let a = split_dataset(&seqs, 0.7, 1).unwrap();
        let b = split_dataset(&seqs, 0.7, 1).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.warnings.len(), 1);
        assert!(a.train.iter().any(|s| s.id == "lonely"));
    }

    #[test]
    fn grid_file_bad_magic() {
        assert!(matches!(read_grids(&b"NOPE\0\0\0\0"[..]), Err(Error::Format(_))));
    }
}
