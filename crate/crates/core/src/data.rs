//! Dataset ingestion, splitting, label noise, augmentation and batching.
//!
//! Training code only ever sees [`UnlabeledSet::instances`]; the hidden
//! ground truth of unlabeled items is reachable through
//! [`UnlabeledSet::eval_labels`] for metrics and nothing else.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

/// Layout of an instance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Vector,
    /// Row-major single-channel image.
    Grid { height: usize, width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Vec<f64>>,
    /// `None` marks an item that arrived unlabeled.
    labels: Vec<Option<usize>>,
    classes: usize,
    geometry: Geometry,
}

impl Dataset {
    pub fn new(instances: Vec<Vec<f64>>, labels: Vec<Option<usize>>, classes: usize, geometry: Geometry) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: instances.len(), actual: labels.len() });
        }
        let Some(dim) = instances.first().map(Vec::len) else {
            return param_err("dataset has no instances");
        };
        if instances.iter().any(|x| x.len() != dim) {
            return param_err("instances differ in dimension");
        }
        if let Geometry::Grid { height, width } = geometry {
            if height * width != dim {
                return param_err(format!("grid {height}x{width} does not match dimension {dim}"));
            }
        }
        if let Some(bad) = labels.iter().flatten().find(|&&y| y >= classes) {
            return param_err(format!("label {bad} out of range for {classes} classes"));
        }
        Ok(Self { instances, labels, classes, geometry })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// All items as a labeled set; fails if any item lacks a label.
    pub fn into_labeled(self) -> Result<LabeledSet> {
        let labels = self
            .labels
            .iter()
            .map(|l| l.ok_or_else(|| Error::Parameter("dataset contains unlabeled items".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledSet { instances: self.instances, labels, classes: self.classes, geometry: self.geometry })
    }

    /// Splits a file that already marks unlabeled items (label −1).
    pub fn presplit(self) -> (LabeledSet, UnlabeledSet) {
        let mut labeled = LabeledSet { instances: vec![], labels: vec![], classes: self.classes, geometry: self.geometry };
        let mut unlabeled = UnlabeledSet { instances: vec![], eval_labels: None, classes: self.classes, geometry: self.geometry };
        for (x, y) in self.instances.into_iter().zip(self.labels) {
            match y {
                Some(y) => {
                    labeled.instances.push(x);
                    labeled.labels.push(y);
                }
                None => unlabeled.instances.push(x),
            }
        }
        (labeled, unlabeled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    instances: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
    geometry: Geometry,
}

impl LabeledSet {
    pub fn new(instances: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize, geometry: Geometry) -> Result<Self> {
        let labels = labels.into_iter().map(Some).collect();
        Dataset::new(instances, labels, classes, geometry)?.into_labeled()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    instances: Vec<Vec<f64>>,
    eval_labels: Option<Vec<usize>>,
    classes: usize,
    geometry: Geometry,
}

impl UnlabeledSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }

    /// Hidden ground truth, for metrics only.
    pub fn eval_labels(&self) -> Option<&[usize]> {
        self.eval_labels.as_deref()
    }

    /// The same items with their hidden labels dropped.
    pub fn without_eval_labels(&self) -> Self {
        Self { eval_labels: None, ..self.clone() }
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parses `label,f0,f1,…` CSV text. A label of `-1` marks an unlabeled item.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let perr = |offset: usize, message: String| Error::Parse { offset, message };
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().filter(|h| !h.trim().is_empty()).ok_or_else(|| perr(0, "empty file".into()))?;
    let columns: Vec<&str> = header.trim_end_matches(['\n', '\r']).split(',').collect();
    if columns.len() < 2 || columns[0] != "label" {
        return Err(perr(0, "header must start with `label` followed by feature columns".into()));
    }
    for (i, c) in columns[1..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(perr(0, format!("expected header column `f{i}`, found `{c}`")));
        }
    }
    let dim = columns.len() - 1;
    offset += header.len();

    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        let row = line.trim_end_matches(['\n', '\r']);
        if row.is_empty() {
            offset += line.len();
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(perr(offset, format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let label: i64 = fields[0].trim().parse().map_err(|e| perr(offset, format!("bad label `{}`: {e}", fields[0])))?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(perr(offset, format!("label {l} is negative"))),
        });
        let x = fields[1..]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| perr(offset, format!("bad value `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(perr(offset, "non-finite feature value".into()));
        }
        instances.push(x);
        offset += line.len();
    }
    if instances.is_empty() {
        return Err(perr(offset, "no data rows".into()));
    }
    let classes = labels.iter().flatten().max().map_or(1, |m| m + 1);
    Dataset::new(instances, labels, classes, Geometry::Vector)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    parse_csv(&std::fs::read_to_string(path)?)
}

const IDX_UBYTE: u8 = 0x08;

fn parse_idx_header(bytes: &[u8], expected_dims: usize) -> Result<(Vec<usize>, usize)> {
    let perr = |offset, message: String| Error::Parse { offset, message };
    if bytes.len() < 4 {
        return Err(perr(0, "truncated IDX magic".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(perr(0, format!("bad IDX magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3])));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(perr(2, format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    if ndims != expected_dims {
        return Err(perr(3, format!("expected {expected_dims} IDX dimensions, found {ndims}")));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(perr(bytes.len(), "truncated IDX dimensions".into()));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    if bytes.len() != header_len + payload {
        return Err(perr(bytes.len().min(header_len + payload), format!(
            "IDX payload holds {} bytes, dimensions require {payload}",
            bytes.len() - header_len
        )));
    }
    Ok((dims, header_len))
}

/// Parses an IDX image file (magic `0x00000803`), scaling bytes to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, Geometry)> {
    let (dims, start) = parse_idx_header(bytes, 3)?;
    let (n, height, width) = (dims[0], dims[1], dims[2]);
    let size = height * width;
    let instances = if size == 0 {
        vec![Vec::new(); n]
    } else {
        bytes[start..].chunks_exact(size).map(|img| img.iter().map(|&b| b as f64 / 255.0).collect()).collect()
    };
    Ok((instances, Geometry::Grid { height, width }))
}

/// Parses an IDX label file (magic `0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (_, start) = parse_idx_header(bytes, 1)?;
    Ok(bytes[start..].iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image file and, optionally, its label file.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let (instances, geometry) = parse_idx_images(&std::fs::read(images)?)?;
    let labels: Vec<Option<usize>> = match labels {
        Some(p) => {
            let l = parse_idx_labels(&std::fs::read(p)?)?;
            if l.len() != instances.len() {
                return Err(Error::LengthMismatch { expected: instances.len(), actual: l.len() });
            }
            l.into_iter().map(Some).collect()
        }
        None => vec![None; instances.len()],
    };
    let classes = labels.iter().flatten().max().map_or(1, |m| m + 1);
    Dataset::new(instances, labels, classes, geometry)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Moons,
    Blobs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub classes: usize,
    /// Ignored for moons, which are always two-dimensional.
    pub dim: usize,
    /// Standard deviation of the isotropic Gaussian noise.
    pub noise: f64,
    /// Distance of each blob center from the origin.
    pub spread: f64,
    pub seed: u64,
}

/// Generates a labeled synthetic dataset with balanced classes (`label = i mod Y`).
///
/// Blob `k` is centered at `spread · e_k`, so `classes` may not exceed `dim`.
pub fn synth(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.n < spec.classes {
        return param_err(format!("need n >= classes > 0, got n={} classes={}", spec.n, spec.classes));
    }
    if !(spec.noise >= 0.0) {
        return param_err("noise must be non-negative");
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Parameter(e.to_string()))?;
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let instances = match spec.kind {
        SynthKind::Moons => {
            if spec.classes != 2 {
                return param_err(format!("moons have exactly 2 classes, got {}", spec.classes));
            }
            labels
                .iter()
                .map(|&y| {
                    let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let (x0, x1) = if y == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
                    vec![x0 + normal.sample(&mut rng), x1 + normal.sample(&mut rng)]
                })
                .collect()
        }
        SynthKind::Blobs => {
            if spec.classes > spec.dim {
                return param_err(format!("blobs need dim >= classes, got dim={} classes={}", spec.dim, spec.classes));
            }
            labels
                .iter()
                .map(|&y| {
                    (0..spec.dim)
                        .map(|j| {
                            let center = if j == y { spec.spread } else { 0.0 };
                            center + normal.sample(&mut rng)
                        })
                        .collect()
                })
                .collect()
        }
    };
    Dataset::new(instances, labels.into_iter().map(Some).collect(), spec.classes, Geometry::Vector)
}

// ---------------------------------------------------------------------------
// Splitting and label noise
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub labels_per_class: usize,
    pub seed: u64,
}

/// Picks `labels_per_class` items of every class at random; the rest become unlabeled.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(LabeledSet, UnlabeledSet)> {
    if spec.labels_per_class == 0 {
        return param_err("labels_per_class must be positive");
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.classes];
    for (i, y) in dataset.labels.iter().enumerate() {
        let y = y.ok_or_else(|| Error::Parameter(format!("item {i} has no label to split on")))?;
        by_class[y].push(i);
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(spec.seed);
    let mut is_labeled = vec![false; dataset.len()];
    let mut labeled_idx = Vec::with_capacity(spec.labels_per_class * dataset.classes);
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < spec.labels_per_class {
            return param_err(format!(
                "class {class} has {} items, fewer than {} labels per class",
                members.len(),
                spec.labels_per_class
            ));
        }
        members.shuffle(&mut rng);
        for &i in &members[..spec.labels_per_class] {
            is_labeled[i] = true;
            labeled_idx.push(i);
        }
    }
    let labeled = LabeledSet {
        instances: labeled_idx.iter().map(|&i| dataset.instances[i].clone()).collect(),
        labels: labeled_idx.iter().map(|&i| dataset.labels[i].expect("checked above")).collect(),
        classes: dataset.classes,
        geometry: dataset.geometry,
    };
    let rest: Vec<usize> = (0..dataset.len()).filter(|&i| !is_labeled[i]).collect();
    let unlabeled = UnlabeledSet {
        instances: rest.iter().map(|&i| dataset.instances[i].clone()).collect(),
        eval_labels: Some(rest.iter().map(|&i| dataset.labels[i].expect("checked above")).collect()),
        classes: dataset.classes,
        geometry: dataset.geometry,
    };
    Ok((labeled, unlabeled))
}

/// Asymmetric label noise: each item of a mapped class flips to its target
/// with probability `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// `(from, to)` pairs; a pair and its reverse give a swap.
    pub mapping: Vec<(usize, usize)>,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return param_err(format!("noise rate must lie in [0, 1], got {}", self.rate));
        }
        let mut seen = vec![false; classes];
        for &(from, to) in &self.mapping {
            if from >= classes || to >= classes {
                return param_err(format!("noise mapping {from}->{to} out of range for {classes} classes"));
            }
            if from == to {
                return param_err(format!("noise mapping sends class {from} to itself"));
            }
            if std::mem::replace(&mut seen[from], true) {
                return param_err(format!("class {from} mapped twice"));
            }
        }
        Ok(())
    }

    fn target(&self, class: usize) -> Option<usize> {
        self.mapping.iter().find(|(f, _)| *f == class).map(|&(_, t)| t)
    }
}

pub fn inject_noise(set: &LabeledSet, noise: &NoiseSpec) -> Result<LabeledSet> {
    noise.validate(set.classes)?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(noise.seed);
    let mut out = set.clone();
    for y in &mut out.labels {
        if let Some(target) = noise.target(*y) {
            if rng.random::<f64>() < noise.rate {
                *y = target;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AugmentationSpec {
    Vector {
        weak_sigma: f64,
        strong_sigma: f64,
        /// Fraction of coordinates zeroed by the strong view.
        dropout: f64,
    },
    Grid {
        flip_prob: f64,
        /// Maximum shift in pixels along each axis.
        shift: usize,
        /// Side of the square set to mid-grey by the strong view.
        cutout: usize,
        /// Strong-view brightness factor is drawn from `1 ± jitter`.
        jitter: f64,
    },
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec::Vector { weak_sigma: 0.05, strong_sigma: 0.2, dropout: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    Weak,
    Strong,
}

impl AugmentationSpec {
    pub fn validate(&self, geometry: Geometry) -> Result<()> {
        match (*self, geometry) {
            (AugmentationSpec::Vector { weak_sigma, strong_sigma, dropout }, _) => {
                if !(weak_sigma >= 0.0 && strong_sigma >= weak_sigma) {
                    return param_err("vector augmentation needs strong_sigma >= weak_sigma >= 0");
                }
                if !(0.0..1.0).contains(&dropout) {
                    return param_err("dropout fraction must lie in [0, 1)");
                }
            }
            (AugmentationSpec::Grid { flip_prob, jitter, .. }, Geometry::Grid { .. }) => {
                if !(0.0..=1.0).contains(&flip_prob) || !(0.0..1.0).contains(&jitter) {
                    return param_err("grid augmentation needs flip_prob in [0, 1] and jitter in [0, 1)");
                }
            }
            (AugmentationSpec::Grid { .. }, Geometry::Vector) => {
                return param_err("grid augmentation requires image-shaped data");
            }
        }
        Ok(())
    }
}

/// One stochastic view of `x`.
pub fn augment<R: Rng + ?Sized>(
    x: &[f64],
    spec: &AugmentationSpec,
    strength: Strength,
    geometry: Geometry,
    rng: &mut R,
) -> Vec<f64> {
    match *spec {
        AugmentationSpec::Vector { weak_sigma, strong_sigma, dropout } => {
            let sigma = if strength == Strength::Weak { weak_sigma } else { strong_sigma };
            let mut out: Vec<f64> = if sigma == 0.0 {
                x.to_vec()
            } else {
                x.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect()
            };
            if strength == Strength::Strong {
                let drop = (dropout * x.len() as f64).floor() as usize;
                for i in index::sample(rng, x.len(), drop) {
                    out[i] = 0.0;
                }
            }
            out
        }
        AugmentationSpec::Grid { flip_prob, shift, cutout, jitter } => {
            let Geometry::Grid { height, width } = geometry else {
                panic!("grid augmentation applied to vector data");
            };
            let flip = rng.random::<f64>() < flip_prob;
            let s = shift as i64;
            let dy = rng.random_range(-s..=s);
            let dx = rng.random_range(-s..=s);
            let mut out = vec![0.0; x.len()];
            for r in 0..height as i64 {
                for c in 0..width as i64 {
                    let (sr, sc) = (r - dy, c - dx);
                    if sr < 0 || sc < 0 || sr >= height as i64 || sc >= width as i64 {
                        continue;
                    }
                    let sc = if flip { width as i64 - 1 - sc } else { sc };
                    out[(r * width as i64 + c) as usize] = x[(sr * width as i64 + sc) as usize];
                }
            }
            if strength == Strength::Strong {
                if cutout > 0 {
                    let cy = rng.random_range(0..height) as i64 - cutout as i64 / 2;
                    let cx = rng.random_range(0..width) as i64 - cutout as i64 / 2;
                    for r in cy.max(0)..(cy + cutout as i64).min(height as i64) {
                        for c in cx.max(0)..(cx + cutout as i64).min(width as i64) {
                            out[(r * width as i64 + c) as usize] = 0.5;
                        }
                    }
                }
                let factor = 1.0 + if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                for v in &mut out {
                    *v = (*v * factor).clamp(0.0, 1.0);
                }
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Cycles through `0..n` in a fresh random order every epoch.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl EpochSampler {
    pub fn new(n: usize) -> Self {
        Self { order: (0..n).collect(), cursor: n }
    }

    pub fn next<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    /// `B`.
    pub labeled_batch: usize,
    /// `μ`; the unlabeled batch holds `μ·B` items.
    pub unlabeled_ratio: usize,
}

impl BatchSpec {
    pub fn unlabeled_batch(&self) -> usize {
        self.labeled_batch * self.unlabeled_ratio
    }
}

/// Labeled items with one weak view each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub views: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Unlabeled items with one weak and one strong view each.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledBatch {
    pub weak: Vec<Vec<f64>>,
    pub strong: Vec<Vec<f64>>,
}

impl UnlabeledBatch {
    pub fn len(&self) -> usize {
        self.weak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak.is_empty()
    }
}

/// Draws batches with independent random streams for the labeled and the
/// unlabeled side, so that adding or removing unlabeled work never shifts
/// the labeled sequence.
#[derive(Debug, Clone)]
pub struct BatchStream {
    spec: BatchSpec,
    augmentation: AugmentationSpec,
    labeled: EpochSampler,
    unlabeled: EpochSampler,
    labeled_rng: ChaCha8Rng,
    unlabeled_rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(
        spec: BatchSpec,
        augmentation: AugmentationSpec,
        labeled: &LabeledSet,
        unlabeled: &UnlabeledSet,
        labeled_rng: ChaCha8Rng,
        unlabeled_rng: ChaCha8Rng,
    ) -> Result<Self> {
        if spec.labeled_batch == 0 {
            return param_err("labeled batch size must be positive");
        }
        if labeled.is_empty() {
            return param_err("labeled set is empty");
        }
        augmentation.validate(labeled.geometry())?;
        Ok(Self {
            spec,
            augmentation,
            labeled: EpochSampler::new(labeled.len()),
            unlabeled: EpochSampler::new(unlabeled.len()),
            labeled_rng,
            unlabeled_rng,
        })
    }

    pub fn next_labeled(&mut self, set: &LabeledSet) -> LabeledBatch {
        let idx = self.labeled.next(self.spec.labeled_batch, &mut self.labeled_rng);
        let views = idx
            .iter()
            .map(|&i| augment(&set.instances[i], &self.augmentation, Strength::Weak, set.geometry, &mut self.labeled_rng))
            .collect();
        LabeledBatch { views, labels: idx.iter().map(|&i| set.labels[i]).collect() }
    }

    pub fn next_unlabeled(&mut self, set: &UnlabeledSet) -> UnlabeledBatch {
        let idx = self.unlabeled.next(self.spec.unlabeled_batch(), &mut self.unlabeled_rng);
        let mut weak = Vec::with_capacity(idx.len());
        let mut strong = Vec::with_capacity(idx.len());
        for &i in &idx {
            let x = &set.instances[i];
            weak.push(augment(x, &self.augmentation, Strength::Weak, set.geometry, &mut self.unlabeled_rng));
            strong.push(augment(x, &self.augmentation, Strength::Strong, set.geometry, &mut self.unlabeled_rng));
        }
        UnlabeledBatch { weak, strong }
    }

    pub fn next_batches(&mut self, labeled: &LabeledSet, unlabeled: &UnlabeledSet) -> (LabeledBatch, UnlabeledBatch) {
        (self.next_labeled(labeled), self.next_unlabeled(unlabeled))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn blobs(n: usize, classes: usize, dim: usize, noise: f64, seed: u64) -> Dataset {
        synth(&SynthSpec { kind: SynthKind::Blobs, n, classes, dim, noise, spread: 3.0, seed }).unwrap()
    }

    #[test]
    fn csv_basic() {
        let d = parse_csv("label,f0,f1\n0,0.1,0.2\n1,0.3,0.4\n").unwrap();
        assert_eq!((d.len(), d.dim(), d.classes()), (2, 2, 2));
        assert_eq!(d.instances()[1], vec![0.3, 0.4]);
    }

    #[test]
    fn csv_errors_carry_offsets() {
        assert!(matches!(parse_csv(""), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_csv("label,f0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv("lbl,f0\n0,1\n"), Err(Error::Parse { offset: 0, .. })));
        match parse_csv("label,f0,f1\n0,0.1,0.2\n1,0.3\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 22),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv("label,f0\n0,abc\n"), Err(Error::Parse { offset: 9, .. })));
    }

    #[test]
    fn csv_unlabeled_marker() {
        let d = parse_csv("label,f0\n-1,0.5\n2,0.1\n").unwrap();
        assert_eq!(d.labels(), &[None, Some(2)]);
        assert_eq!(d.classes(), 3);
        let (l, u) = d.presplit();
        assert_eq!((l.len(), u.len()), (1, 1));
        assert!(u.eval_labels().is_none());
    }

    fn idx_bytes(magic_type: u8, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, magic_type, dims.len() as u8];
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn idx_images_and_labels() {
        let bytes = idx_bytes(0x08, &[10, 28, 28], &vec![255u8; 10 * 784]);
        let (x, g) = parse_idx_images(&bytes).unwrap();
        assert_eq!((x.len(), x[0].len()), (10, 784));
        assert_eq!(g, Geometry::Grid { height: 28, width: 28 });
        assert_eq!(x[3][100], 1.0);
        assert_eq!(parse_idx_labels(&idx_bytes(0x08, &[3], &[0, 7, 2])).unwrap(), vec![0, 7, 2]);
        assert!(matches!(parse_idx_images(&[0, 1, 8, 3]), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_idx_images(&idx_bytes(0x08, &[1], &[0])), Err(Error::Parse { offset: 3, .. })));
        assert!(parse_idx_images(&idx_bytes(0x08, &[2, 2, 2], &[0; 7])).is_err());
        assert!(parse_idx_images(&[]).is_err());
    }

    #[test]
    fn synth_blobs_zero_noise_at_centers() {
        let d = blobs(40, 4, 6, 0.0, 1);
        for (x, y) in d.instances().iter().zip(d.labels()) {
            let y = y.unwrap();
            for (j, v) in x.iter().enumerate() {
                assert_eq!(*v, if j == y { 3.0 } else { 0.0 });
            }
        }
        assert_eq!(blobs(100, 4, 6, 0.7, 9), blobs(100, 4, 6, 0.7, 9));
        assert_ne!(blobs(100, 4, 6, 0.7, 9), blobs(100, 4, 6, 0.7, 10));
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let moons = SynthSpec { kind: SynthKind::Moons, n: 10, classes: 3, dim: 2, noise: 0.1, spread: 1.0, seed: 0 };
        assert!(synth(&moons).is_err());
        assert!(synth(&SynthSpec { classes: 2, ..moons.clone() }).is_ok());
        assert!(synth(&SynthSpec { classes: 2, n: 1, ..moons }).is_err());
    }

    #[test]
    fn split_balanced_and_disjoint() {
        let d = blobs(400, 4, 8, 1.0, 3);
        let (l, u) = split(&d, &SplitSpec { labels_per_class: 4, seed: 5 }).unwrap();
        assert_eq!(l.class_counts(), vec![4; 4]);
        assert_eq!(u.len(), 384);
        let mut all: Vec<&Vec<f64>> = l.instances().iter().chain(u.instances()).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut orig: Vec<&Vec<f64>> = d.instances().iter().collect();
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, orig);

        let (l, u) = split(&d, &SplitSpec { labels_per_class: 100, seed: 5 }).unwrap();
        assert_eq!((l.len(), u.len()), (400, 0));
        assert!(split(&d, &SplitSpec { labels_per_class: 101, seed: 5 }).is_err());
    }

    #[test]
    fn split_ten_classes_forty_labels() {
        let d = blobs(1000, 10, 10, 1.0, 3);
        let (l, _) = split(&d, &SplitSpec { labels_per_class: 4, seed: 0 }).unwrap();
        assert_eq!(l.len(), 40);
        assert_eq!(l.class_counts(), vec![4; 10]);
    }

    #[test]
    fn noise_examples() {
        let d = blobs(1000, 4, 4, 1.0, 3);
        let (l, _) = split(&d, &SplitSpec { labels_per_class: 250, seed: 0 }).unwrap();
        let spec = |rate, mapping: Vec<(usize, usize)>| NoiseSpec { mapping, rate, seed: 11 };

        assert_eq!(inject_noise(&l, &spec(0.0, vec![(0, 1)])).unwrap(), l);

        let all = inject_noise(&l, &spec(1.0, vec![(0, 1)])).unwrap();
        assert_eq!(all.class_counts(), vec![0, 500, 250, 250]);
        assert_eq!(all.instances(), l.instances());

        let half = inject_noise(&l, &spec(0.5, vec![(2, 3), (3, 2)])).unwrap();
        let flipped = l.labels().iter().zip(half.labels()).filter(|(a, b)| a != b).count();
        assert!((200..=300).contains(&flipped), "{flipped} of 500 flipped");
        assert_eq!(half, inject_noise(&l, &spec(0.5, vec![(2, 3), (3, 2)])).unwrap());
        for (a, b) in l.labels().iter().zip(half.labels()) {
            if *a < 2 {
                assert_eq!(a, b);
            }
        }

        assert!(inject_noise(&l, &spec(0.5, vec![(0, 4)])).is_err());
        assert!(inject_noise(&l, &spec(0.5, vec![(1, 1)])).is_err());
        assert!(inject_noise(&l, &spec(0.5, vec![(1, 2), (1, 3)])).is_err());
    }

    #[test]
    fn augment_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let spec = AugmentationSpec::Vector { weak_sigma: 0.0, strong_sigma: 0.0, dropout: 0.25 };
        assert_eq!(augment(&x, &spec, Strength::Weak, Geometry::Vector, &mut rng), x);
        let strong = augment(&x, &spec, Strength::Strong, Geometry::Vector, &mut rng);
        assert_eq!(strong.iter().filter(|&&v| v == 0.0).count(), 2);

        let spec = AugmentationSpec::default();
        let a = augment(&x, &spec, Strength::Strong, Geometry::Vector, &mut ChaCha8Rng::seed_from_u64(4));
        let b = augment(&x, &spec, Strength::Strong, Geometry::Vector, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn augment_grid() {
        let g = Geometry::Grid { height: 4, width: 4 };
        let x: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let flip = AugmentationSpec::Grid { flip_prob: 1.0, shift: 0, cutout: 0, jitter: 0.0 };
        let out = augment(&x, &flip, Strength::Weak, g, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(&out[..4], &[3.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0, 0.0]);
        let strong = AugmentationSpec::Grid { flip_prob: 0.5, shift: 1, cutout: 2, jitter: 0.2 };
        let out = augment(&x, &strong, Strength::Strong, g, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(strong.validate(Geometry::Vector).is_err());
        assert!(AugmentationSpec::Vector { weak_sigma: 0.3, strong_sigma: 0.2, dropout: 0.0 }.validate(Geometry::Vector).is_err());
        assert!(AugmentationSpec::Vector { weak_sigma: 0.1, strong_sigma: 0.2, dropout: 1.0 }.validate(Geometry::Vector).is_err());
    }

    fn stream(spec: BatchSpec, l: &LabeledSet, u: &UnlabeledSet, seed: u64) -> BatchStream {
        let mut lr = ChaCha8Rng::seed_from_u64(seed);
        lr.set_stream(1);
        let mut ur = ChaCha8Rng::seed_from_u64(seed);
        ur.set_stream(2);
        BatchStream::new(spec, AugmentationSpec::default(), l, u, lr, ur).unwrap()
    }

    #[test]
    fn batch_sizes_and_determinism() {
        let d = blobs(1000, 4, 8, 1.0, 3);
        let (l, u) = split(&d, &SplitSpec { labels_per_class: 16, seed: 0 }).unwrap();
        let spec = BatchSpec { labeled_batch: 64, unlabeled_ratio: 7 };
        let mut s = stream(spec, &l, &u, 7);
        let (lb, ub) = s.next_batches(&l, &u);
        assert_eq!((lb.views.len(), ub.len(), ub.strong.len()), (64, 448, 448));

        let mut a = stream(spec, &l, &u, 7);
        let mut b = stream(spec, &l, &u, 7);
        for _ in 0..3 {
            assert_eq!(a.next_batches(&l, &u), b.next_batches(&l, &u));
        }
    }

    #[test]
    fn zero_ratio_leaves_labeled_stream_untouched() {
        let d = blobs(400, 4, 8, 1.0, 3);
        let (l, u) = split(&d, &SplitSpec { labels_per_class: 8, seed: 0 }).unwrap();
        let mut sup = stream(BatchSpec { labeled_batch: 8, unlabeled_ratio: 0 }, &l, &u, 2);
        let mut semi = stream(BatchSpec { labeled_batch: 8, unlabeled_ratio: 3 }, &l, &u, 2);
        for _ in 0..10 {
            let (a, ua) = sup.next_batches(&l, &u);
            let (b, _) = semi.next_batches(&l, &u);
            assert!(ua.is_empty());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn epoch_sampler_covers_each_index_once_per_epoch() {
        let mut s = EpochSampler::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut first = s.next(10, &mut rng);
        first.sort();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn eval_labels_hidden_copy() {
        let d = blobs(40, 4, 4, 1.0, 3);
        let (_, u) = split(&d, &SplitSpec { labels_per_class: 2, seed: 0 }).unwrap();
        assert_eq!(u.eval_labels().unwrap().len(), 32);
        let hidden = u.without_eval_labels();
        assert!(hidden.eval_labels().is_none());
        assert_eq!(hidden.instances(), u.instances());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn split_is_partition(per_class in 1usize..10, seed in any::<u64>()) {
            let d = blobs(80, 4, 4, 1.0, seed);
            let (l, u) = split(&d, &SplitSpec { labels_per_class: per_class, seed }).unwrap();
            prop_assert_eq!(l.len() + u.len(), d.len());
            let mut seen: Vec<&Vec<f64>> = l.instances().iter().chain(u.instances()).collect();
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            seen.dedup();
            prop_assert_eq!(seen.len(), d.len());
        }

        #[test]
        fn noise_only_touches_mapped_labels(rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let d = blobs(80, 4, 4, 1.0, 1);
            let (l, _) = split(&d, &SplitSpec { labels_per_class: 20, seed: 0 }).unwrap();
            let noisy = inject_noise(&l, &NoiseSpec { mapping: vec![(0, 1), (1, 0), (2, 3)], rate, seed }).unwrap();
            prop_assert_eq!(noisy.instances(), l.instances());
            for (a, b) in l.labels().iter().zip(noisy.labels()) {
                prop_assert!(a == b || (*a == 0 && *b == 1) || (*a == 1 && *b == 0) || (*a == 2 && *b == 3));
            }
        }
    }
}
