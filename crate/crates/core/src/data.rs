//! Labelled image datasets, IDX parsing, a synthetic generator, node
//! partitioning and training-time augmentation.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{Scalar, Shape, Tensor};
use crate::rng::{derive_seed, dirichlet, normal, rng_for, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Test,
}

/// Images in `[0,1]` stored `(count, C, H, W)` with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    sample: Shape,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<f32>, sample: Shape, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        let per = sample.len();
        if per == 0 || images.len() != per * labels.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels x {:?}", labels.len(), sample.dims()),
                actual: format!("{} values", images.len()),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if images.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("pixel outside [0,1]".to_string()));
        }
        Ok(Self {
            images,
            sample,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> Shape {
        self.sample
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.sample.len();
        &self.images[i * n..(i + 1) * n]
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.sample.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            sample: self.sample,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
        }
    }

    /// A class-stratified random subset of `count` samples (all samples
    /// when `count >= len`).
    pub fn stratified_subset(&self, count: usize, seed: u64) -> Dataset {
        if count >= self.len() {
            return self.clone();
        }
        let mut rng = rng_for(seed, &[tag("subset")]);
        let mut order = Vec::with_capacity(self.len());
        for c in 0..self.classes {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            idx.shuffle(&mut rng);
            order.push(idx);
        }
        // Interleave classes so any prefix is close to stratified.
        let mut merged = Vec::with_capacity(self.len());
        let longest = order.iter().map(Vec::len).max().unwrap_or(0);
        for k in 0..longest {
            for per in &order {
                if let Some(&i) = per.get(k) {
                    merged.push(i);
                }
            }
        }
        let mut picked = merged[..count].to_vec();
        picked.sort_unstable();
        self.subset(&picked)
    }

    /// `(batch, labels)` for the given sample indices.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.sample.len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::of(v as f64)));
        }
        let mut shape = vec![indices.len()];
        shape.extend(self.sample.dims());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new(shape, data).expect("batch shape"), labels)
    }

    /// Whole dataset as one batch.
    pub fn all<T: Scalar>(&self) -> (Tensor<T>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Seeded shuffle of all indices split into `(train, holdout)` with
    /// `holdout_fraction` of the samples in the second part.
    pub fn holdout_split(&self, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_for(seed, &[tag("holdout")]));
        let cut = ((self.len() as f64) * (1.0 - holdout_fraction)).round() as usize;
        let cut = cut.clamp(1.min(self.len()), self.len().saturating_sub(1).max(1));
        let holdout = idx.split_off(cut.min(idx.len()));
        (idx, holdout)
    }
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{}: truncated header", what)))
}

/// Parses an IDX image file and its label file (big-endian headers,
/// unsigned byte payloads). Pixels are scaled by 1/255; the class count is
/// `max label + 1`, at least 10.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {:#010x}", magic)));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {:#010x}", magic)));
    }
    let count = be_u32(images, 4, "images")? as usize;
    let (rows, cols) = (be_u32(images, 8, "images")? as usize, be_u32(images, 12, "images")? as usize);
    let label_count = be_u32(labels, 4, "labels")? as usize;
    if count != label_count {
        return Err(Error::Format(format!("{} images but {} labels", count, label_count)));
    }
    let pixels = images
        .get(16..16 + count * rows * cols)
        .ok_or_else(|| Error::Format("images: truncated payload".to_string()))?;
    let raw_labels = labels
        .get(8..8 + count)
        .ok_or_else(|| Error::Format("labels: truncated payload".to_string()))?;
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    Dataset::new(
        pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        Shape::image(1, rows, cols),
        labels,
        classes,
        split,
    )
}

/// Encodes a dataset back into IDX image and label byte streams. Pixels are
/// rounded to the nearest multiple of 1/255.
pub fn encode_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (c, h, w) = match ds.sample {
        Shape::Image {
            channels,
            height,
            width,
        } => (channels, height, width),
        Shape::Flat(n) => (1, 1, n),
    };
    if c != 1 || ds.classes > 256 {
        return Err(Error::Format("IDX holds single-channel images with byte labels".to_string()));
    }
    let mut images = Vec::with_capacity(16 + ds.images.len());
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, h as u32, w as u32] {
        images.extend(v.to_be_bytes());
    }
    images.extend(ds.images.iter().map(|&p| num_traits::Float::round(p * 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        labels.extend(v.to_be_bytes());
    }
    labels.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

/// Gaussian class clusters rendered as `1 x side x side` images.
///
/// Each class gets a random centre in `[0.2, 0.8]^d`; samples add isotropic
/// noise of standard deviation `spread` and are clipped to `[0,1]`. Labels
/// cycle through the classes.
pub fn synth_blobs_sized(classes: usize, per_class: usize, spread: f64, side: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || side == 0 {
        return Err(Error::InvalidSpec(format!("{} classes, side {}", classes, side)));
    }
    let d = side * side;
    let mut rng = rng_for(seed, &[tag("blobs")]);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| rng.gen_range(0.2..0.8)).collect())
        .collect();
    let mut images = Vec::with_capacity(classes * per_class * d);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let c = i % classes;
        for &m in &centres[c] {
            images.push((m + spread * normal(&mut rng)).clamp(0.0, 1.0) as f32);
        }
        labels.push(c);
    }
    Dataset::new(images, Shape::image(1, side, side), labels, classes, Split::Train)
}

/// [`synth_blobs_sized`] with 8x8 images.
pub fn synth_blobs(classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    synth_blobs_sized(classes, per_class, spread, 8, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(tag = "scheme", rename_all = "snake_case"))]
pub enum PartitionScheme {
    Uniform,
    Dirichlet { alpha: f64 },
}

impl PartitionScheme {
    pub const DEFAULT_ALPHA: f64 = 0.9;

    pub fn name(&self) -> &'static str {
        match self {
            PartitionScheme::Uniform => "uniform",
            PartitionScheme::Dirichlet { .. } => "dirichlet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartitionSpec {
    pub nodes: usize,
    pub scheme: PartitionScheme,
    pub seed: u64,
}

/// Per-node index sets into a training set.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataPartition {
    pub nodes: Vec<Vec<usize>>,
}

/// Redraws allowed when a Dirichlet draw leaves a node empty.
pub const MAX_PARTITION_ATTEMPTS: usize = 10;

impl DataPartition {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks that the sets are pairwise disjoint, non-empty and cover
    /// `0..count`.
    pub fn check_cover(&self, count: usize) -> Result<()> {
        let mut owner = vec![usize::MAX; count];
        for (n, set) in self.nodes.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::EmptyNode { node: n, attempts: 0 });
            }
            for &i in set {
                if i >= count {
                    return Err(Error::InvalidSpec(format!("index {} beyond {} samples", i, count)));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InvalidSpec(format!("index {} in nodes {} and {}", i, owner[i], n)));
                }
                owner[i] = n;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidSpec(format!("index {} unassigned", i)));
        }
        Ok(())
    }
}

/// Splits `ds` across `spec.nodes` nodes.
///
/// `uniform` deals class-shuffled indices round-robin, so node sizes and
/// per-class counts differ by at most one. `dirichlet` draws, for each
/// class, proportions `p ~ Dir(α·1_N)` and hands out that class's shuffled
/// indices in contiguous runs of size `≈ p_k·n_c`.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<DataPartition> {
    let n = spec.nodes;
    if n == 0 || n > ds.len() / ds.classes.max(1) {
        return Err(Error::InvalidSpec(format!(
            "{} nodes for {} samples of {} classes",
            n,
            ds.len(),
            ds.classes
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    match spec.scheme {
        PartitionScheme::Uniform => {
            let mut rng = rng_for(spec.seed, &[tag("uniform")]);
            let mut nodes = vec![Vec::new(); n];
            let mut k = 0;
            for idx in &mut by_class {
                idx.shuffle(&mut rng);
                for &i in idx.iter() {
                    nodes[k % n].push(i);
                    k += 1;
                }
            }
            nodes.iter_mut().for_each(|s| s.sort_unstable());
            Ok(DataPartition { nodes })
        }
        PartitionScheme::Dirichlet { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidSpec(format!("dirichlet alpha {}", alpha)));
            }
            let mut last_empty = 0;
            for attempt in 0..MAX_PARTITION_ATTEMPTS {
                let mut rng = rng_for(derive_seed(spec.seed, &[attempt as u64]), &[tag("dirichlet")]);
                let mut nodes = vec![Vec::new(); n];
                for idx in &by_class {
                    let mut idx = idx.clone();
                    idx.shuffle(&mut rng);
                    let p = dirichlet(&mut rng, alpha, n);
                    let mut cum = 0.0;
                    let mut start = 0;
                    for (k, pk) in p.iter().enumerate() {
                        cum += pk;
                        let end = if k + 1 == n {
                            idx.len()
                        } else {
                            ((cum * idx.len() as f64).round() as usize).clamp(start, idx.len())
                        };
                        nodes[k].extend_from_slice(&idx[start..end]);
                        start = end;
                    }
                }
                match nodes.iter().position(Vec::is_empty) {
                    Some(k) => last_empty = k,
                    None => {
                        nodes.iter_mut().for_each(|s| s.sort_unstable());
                        return Ok(DataPartition { nodes });
                    }
                }
            }
            Err(Error::EmptyNode {
                node: last_empty,
                attempts: MAX_PARTITION_ATTEMPTS,
            })
        }
    }
}

/// Horizontal mirror of one `(C, H, W)` image in place.
pub fn flip_horizontal<T: Copy>(img: &mut [T], channels: usize, height: usize, width: usize) {
    for row in img[..channels * height * width].chunks_exact_mut(width) {
        row.reverse();
    }
}

/// Crops the `(ch, cw)` window at `(top, left)` and resizes it back to the
/// full `(H, W)` by nearest-neighbour sampling.
pub fn resized_crop<T: Copy>(
    img: &[T],
    channels: usize,
    height: usize,
    width: usize,
    (top, left, ch, cw): (usize, usize, usize, usize),
) -> Vec<T> {
    let mut out = Vec::with_capacity(channels * height * width);
    for c in 0..channels {
        let plane = &img[c * height * width..][..height * width];
        for y in 0..height {
            let sy = top + (y * ch) / height;
            for x in 0..width {
                let sx = left + (x * cw) / width;
                out.push(plane[sy * width + sx]);
            }
        }
    }
    out
}

pub const CROP_SCALE: (f64, f64) = (0.8, 1.0);

/// Per-sample random horizontal flip (p = 0.5) and random resized crop
/// covering a fraction in [`CROP_SCALE`] of the image area (square aspect).
/// Flat samples pass through unchanged.
pub fn augment<T: Scalar>(batch: &Tensor<T>, seed: u64) -> Tensor<T> {
    let dims = batch.shape();
    if dims.len() != 4 {
        return batch.clone();
    }
    let (c, h, w) = (dims[1], dims[2], dims[3]);
    let mut rng = rng_for(seed, &[tag("augment")]);
    let mut out = Vec::with_capacity(batch.len());
    for r in 0..batch.rows() {
        let mut img = batch.row(r).to_vec();
        if rng.gen_bool(0.5) {
            flip_horizontal(&mut img, c, h, w);
        }
        let scale: f64 = rng.gen_range(CROP_SCALE.0..=CROP_SCALE.1);
        let side = num_traits::Float::sqrt(scale);
        let ch = ((h as f64 * side).round() as usize).clamp(1, h);
        let cw = ((w as f64 * side).round() as usize).clamp(1, w);
        let top = rng.gen_range(0..=h - ch);
        let left = rng.gen_range(0..=w - cw);
        out.extend(resized_crop(&img, c, h, w, (top, left, ch, cw)));
    }
    Tensor::new(dims.to_vec(), out).expect("augment keeps shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0, 255, 51, 102, 153, 204, 1, 254]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 9];
        (img, lab)
    }

    #[test]
    fn idx_fixture_recovers_pixels() {
        let (img, lab) = idx_fixture();
        let ds = parse_idx(&img, &lab, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sample_shape(), Shape::image(1, 2, 2));
        assert_eq!(ds.labels(), &[3, 9]);
        assert_eq!(ds.image(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.image(1), &[0.6, 0.8, 1.0 / 255.0, 254.0 / 255.0]);
    }

    #[test]
    fn idx_rejects_bad_input() {
        let (img, lab) = idx_fixture();
        assert!(matches!(parse_idx(&img, &img, Split::Train), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&img[..18], &lab, Split::Train), Err(Error::Format(_))));
        let mut short = lab.clone();
        short[7] = 3;
        assert!(matches!(parse_idx(&img, &short, Split::Train), Err(Error::Format(_))));
    }

    #[test]
    fn idx_round_trip() {
        let (img, lab) = idx_fixture();
        let ds = parse_idx(&img, &lab, Split::Test).unwrap();
        let (i2, l2) = encode_idx(&ds).unwrap();
        assert_eq!((i2, l2), (img, lab));
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = synth_blobs(10, 100, 0.1, 4).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.class_counts().iter().all(|&c| c == 100));
        assert_eq!(a, synth_blobs(10, 100, 0.1, 4).unwrap());
        assert_ne!(a, synth_blobs(10, 100, 0.1, 5).unwrap());
    }

    #[test]
    fn uniform_partition_exact_sizes() {
        let ds = synth_blobs(10, 1000, 0.1, 0).unwrap();
        let p = partition(
            &ds,
            &PartitionSpec {
                nodes: 5,
                scheme: PartitionScheme::Uniform,
                seed: 1,
            },
        )
        .unwrap();
        p.check_cover(ds.len()).unwrap();
        assert!(p.nodes.iter().all(|s| s.len() == 2000));
    }

    #[test]
    fn dirichlet_concentrated_is_near_uniform() {
        let ds = synth_blobs(4, 3000, 0.1, 0).unwrap();
        let p = partition(
            &ds,
            &PartitionSpec {
                nodes: 3,
                scheme: PartitionScheme::Dirichlet { alpha: 1e6 },
                seed: 2,
            },
        )
        .unwrap();
        p.check_cover(ds.len()).unwrap();
        for set in &p.nodes {
            let sub = ds.subset(set);
            for (c, &k) in sub.class_counts().iter().enumerate() {
                let share = k as f64 / ds.class_counts()[c] as f64;
                assert!((share - 1.0 / 3.0).abs() < 0.02, "share {}", share);
            }
        }
    }

    #[test]
    fn dirichlet_sizes_vary_more_than_uniform() {
        let ds = synth_blobs(10, 100, 0.1, 0).unwrap();
        let var = |p: &DataPartition| {
            let m = ds.len() as f64 / p.len() as f64;
            p.nodes.iter().map(|s| (s.len() as f64 - m).powi(2)).sum::<f64>()
        };
        let spec = |scheme| PartitionSpec { nodes: 3, scheme, seed: 9 };
        let u = partition(&ds, &spec(PartitionScheme::Uniform)).unwrap();
        let d = partition(&ds, &spec(PartitionScheme::Dirichlet { alpha: 0.9 })).unwrap();
        d.check_cover(ds.len()).unwrap();
        assert!(var(&d) > var(&u));
    }

    #[test]
    fn too_many_nodes_rejected() {
        let ds = synth_blobs(2, 3, 0.1, 0).unwrap();
        let spec = PartitionSpec {
            nodes: 4,
            scheme: PartitionScheme::Uniform,
            seed: 0,
        };
        assert!(matches!(partition(&ds, &spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn tiny_alpha_eventually_reports_empty_node() {
        let ds = synth_blobs(2, 10, 0.1, 0).unwrap();
        let spec = PartitionSpec {
            nodes: 10,
            scheme: PartitionScheme::Dirichlet { alpha: 1e-4 },
            seed: 0,
        };
        assert!(matches!(partition(&ds, &spec), Err(Error::EmptyNode { attempts: 10, .. })));
    }

    #[test]
    fn flip_is_an_involution() {
        let img: Vec<f32> = (0..2 * 3 * 4).map(|v| v as f32).collect();
        let mut twice = img.clone();
        flip_horizontal(&mut twice, 2, 3, 4);
        assert_ne!(twice, img);
        flip_horizontal(&mut twice, 2, 3, 4);
        assert_eq!(twice, img);
    }

    #[test]
    fn full_crop_is_identity() {
        let img: Vec<f32> = (0..28 * 28).map(|v| v as f32).collect();
        assert_eq!(resized_crop(&img, 1, 28, 28, (0, 0, 28, 28)), img);
    }

    #[test]
    fn augment_is_seeded() {
        let ds = synth_blobs(3, 10, 0.2, 1).unwrap();
        let (x, _) = ds.all::<f32>();
        assert_eq!(augment(&x, 4), augment(&x, 4));
        assert_ne!(augment(&x, 4), augment(&x, 5));
    }

    #[test]
    fn stratified_subset_keeps_ratios() {
        let ds = synth_blobs(10, 50, 0.1, 0).unwrap();
        let sub = ds.stratified_subset(100, 3);
        assert!(sub.class_counts().iter().all(|&c| c == 10));
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_covers(seed in 0u64..1000, nodes in 1usize..8, alpha in 0.3f64..5.0) {
            let ds = synth_blobs(5, 40, 0.1, seed).unwrap();
            for scheme in [PartitionScheme::Uniform, PartitionScheme::Dirichlet { alpha }] {
                let spec = PartitionSpec { nodes, scheme, seed };
                if let Ok(p) = partition(&ds, &spec) {
                    prop_assert!(p.check_cover(ds.len()).is_ok());
                    prop_assert_eq!(p.len(), nodes);
                } else {
                    let dirichlet = matches!(scheme, PartitionScheme::Dirichlet { .. });
                    prop_assert!(dirichlet);
                }
            }
        }

        #[test]
        fn uniform_is_stratified(seed in 0u64..1000, nodes in 1usize..8) {
            let ds = synth_blobs(4, 37, 0.1, seed).unwrap();
            let p = partition(&ds, &PartitionSpec { nodes, scheme: PartitionScheme::Uniform, seed }).unwrap();
            let sizes: Vec<usize> = p.nodes.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for c in 0..4 {
                let per: Vec<usize> = p.nodes.iter().map(|s| s.iter().filter(|&&i| ds.labels()[i] == c).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn augment_preserves_range(seed in 0u64..500) {
            let ds = synth_blobs(3, 4, 0.5, seed).unwrap();
            let (x, _) = ds.all::<f32>();
            let y = augment(&x, seed);
            prop_assert_eq!(y.shape(), x.shape());
            prop_assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
