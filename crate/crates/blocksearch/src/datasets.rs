//! Dataset loading, validation splits, and deterministic synthetic data.
//!
//! Supported on-disk formats: the CIFAR-10 binary batch layout (one label
//! byte plus 3072 channel-planar RGB bytes per record) and the idx
//! image/label pair (magic 0x00000803 / 0x00000801, big-endian dimensions).
//! A seeded synthetic generator provides desk-scale class-conditional images
//! for tests and end-to-end runs. Loaders for CIFAR-100, SVHN, and FER2013
//! exist as profile stubs behind the same interface; full-scale runs are out
//! of scope here.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Which split a set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Images with labels. Pixel values are in [0, 1]; image layout is
/// count x height x width x channels. Every access to the pixel data bumps a
/// shared read counter, which the trainer uses to prove the test split is
/// never touched before final evaluation.
#[derive(Debug, Clone)]
pub struct LabeledImageSet {
    images: Tensor<f32>,
    labels: Vec<u32>,
    num_classes: usize,
    split: SplitTag,
    reads: Arc<AtomicU64>,
}

impl LabeledImageSet {
    pub fn new(images: Tensor<f32>, labels: Vec<u32>, num_classes: usize, split: SplitTag) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Data(format!(
                "image tensor must be count x h x w x c, got {:?}",
                images.shape()
            )));
        }
        if images.dim(0) != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.dim(0),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledImageSet { images, labels, num_classes, split, reads: Arc::new(AtomicU64::new(0)) })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    /// (height, width, channels) of one image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        (self.images.dim(1), self.images.dim(2), self.images.dim(3))
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel data; counted as a read.
    pub fn images(&self) -> &Tensor<f32> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.images
    }

    /// How many times the pixel data has been accessed.
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// Extracts the given examples as a batch; counted as a read.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<u32>) {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let (h, w, c) = self.image_shape();
        let stride = h * w * c;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        let batch = Tensor::new(vec![indices.len(), h, w, c], data).expect("batch shape");
        (batch, labels)
    }

    fn subset(&self, indices: &[usize], split: SplitTag) -> LabeledImageSet {
        let (images, labels) = self.gather(indices);
        LabeledImageSet {
            images,
            labels,
            num_classes: self.num_classes,
            split,
            reads: Arc::new(AtomicU64::new(0)),
        }
    }
}

/// Per-pixel mean image of a set, accumulated in f64.
pub fn compute_pixel_mean(set: &LabeledImageSet) -> Tensor<f32> {
    let (h, w, c) = set.image_shape();
    let stride = h * w * c;
    let mut acc = vec![0.0f64; stride];
    let images = set.images();
    for img in images.data().chunks_exact(stride) {
        for (a, &v) in acc.iter_mut().zip(img) {
            *a += v as f64;
        }
    }
    let n = set.len() as f64;
    Tensor::new(vec![h, w, c], acc.into_iter().map(|v| (v / n) as f32).collect()).expect("mean shape")
}

/// Seeded shuffle-then-partition of a training set into (train', val).
/// Disjoint, exhaustive, and deterministic per seed.
pub fn split_validation(
    set: &LabeledImageSet,
    val_size: usize,
    seed: u64,
) -> Result<(LabeledImageSet, LabeledImageSet)> {
    if val_size == 0 {
        return Err(Error::InvalidConfig("validation split must be non-empty".into()));
    }
    if val_size >= set.len() {
        return Err(Error::InvalidConfig(format!(
            "validation size {val_size} must be smaller than the training set ({})",
            set.len()
        )));
    }
    let mut indices: Vec<usize> = (0..set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let val = set.subset(&indices[..val_size], SplitTag::Val);
    let train = set.subset(&indices[val_size..], SplitTag::Train);
    Ok((train, val))
}

// --- CIFAR-10 binary format ---

const CIFAR_RECORD_BYTES: usize = 3073;
const CIFAR_SIDE: usize = 32;
const CIFAR_CLASSES: usize = 10;

/// Reads one CIFAR-10 binary batch file: per record, 1 label byte then 3072
/// pixel bytes (channel-planar R, G, B, row-major 32x32). Pixels scale to
/// [0, 1] by 1/255.
pub fn read_cifar_batch(path: &Path) -> Result<(Tensor<f32>, Vec<u32>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let records = bytes.len() / CIFAR_RECORD_BYTES + 1;
        return Err(Error::Data(format!(
            "{}: length {} is not a multiple of the {CIFAR_RECORD_BYTES}-byte record \
             (nearest whole count {records} would need {} bytes)",
            path.display(),
            bytes.len(),
            records * CIFAR_RECORD_BYTES
        )));
    }
    let count = bytes.len() / CIFAR_RECORD_BYTES;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut labels = Vec::with_capacity(count);
    let mut data = vec![0.0f32; count * plane * 3];
    for rec in 0..count {
        let base = rec * CIFAR_RECORD_BYTES;
        let label = bytes[base];
        if label as usize >= CIFAR_CLASSES {
            return Err(Error::Data(format!(
                "{}: label byte {label} at offset {base} exceeds {}",
                path.display(),
                CIFAR_CLASSES - 1
            )));
        }
        labels.push(label as u32);
        let pixels = &bytes[base + 1..base + CIFAR_RECORD_BYTES];
        for ch in 0..3 {
            for p in 0..plane {
                data[(rec * plane + p) * 3 + ch] = pixels[ch * plane + p] as f32 / 255.0;
            }
        }
    }
    let images = Tensor::new(vec![count, CIFAR_SIDE, CIFAR_SIDE, 3], data)?;
    Ok((images, labels))
}

/// Loads the standard CIFAR-10 binary directory: data_batch_1..5 plus
/// test_batch.bin, 50000 train and 10000 test examples.
pub fn load_cifar10(dir: &Path) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let mut train_images = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        let path = dir.join(format!("data_batch_{i}.bin"));
        let (images, labels) = read_cifar_batch(&path)?;
        train_images.extend_from_slice(images.data());
        train_labels.extend(labels);
    }
    if train_labels.len() != 50_000 {
        return Err(Error::Data(format!(
            "CIFAR-10 train split has {} records, expected 50000",
            train_labels.len()
        )));
    }
    let (test_images, test_labels) = read_cifar_batch(&dir.join("test_batch.bin"))?;
    if test_labels.len() != 10_000 {
        return Err(Error::Data(format!(
            "CIFAR-10 test split has {} records, expected 10000",
            test_labels.len()
        )));
    }
    let train = LabeledImageSet::new(
        Tensor::new(vec![train_labels.len(), CIFAR_SIDE, CIFAR_SIDE, 3], train_images)?,
        train_labels,
        CIFAR_CLASSES,
        SplitTag::Train,
    )?;
    let test = LabeledImageSet::new(test_images, test_labels, CIFAR_CLASSES, SplitTag::Test)?;
    Ok((train, test))
}

// --- idx format ---

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads an idx3 image file (magic 0x00000803): n x h x w unsigned bytes,
/// big-endian dimensions. Produces single-channel images scaled to [0, 1].
pub fn read_idx_images(path: &Path) -> Result<Tensor<f32>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let fail = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    let magic = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated magic: {e}")))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(fail(format!("magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")));
    }
    let n = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated count: {e}")))? as usize;
    let h = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated height: {e}")))? as usize;
    let w = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated width: {e}")))? as usize;
    let mut bytes = vec![0u8; n * h * w];
    r.read_exact(&mut bytes)
        .map_err(|e| fail(format!("expected {} pixel bytes: {e}", n * h * w)))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| fail(format!("read error: {e}")))? != 0 {
        return Err(fail("trailing bytes after pixel data".into()));
    }
    Tensor::new(vec![n, h, w, 1], bytes.into_iter().map(|b| b as f32 / 255.0).collect())
}

/// Reads an idx1 label file (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<u32>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let fail = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    let magic = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated magic: {e}")))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(fail(format!("magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}")));
    }
    let n = r.read_u32::<BigEndian>().map_err(|e| fail(format!("truncated count: {e}")))? as usize;
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes).map_err(|e| fail(format!("expected {n} label bytes: {e}")))?;
    Ok(bytes.into_iter().map(|b| b as u32).collect())
}

/// Loads an idx image/label pair into one set.
pub fn load_idx_pair(images: &Path, labels: &Path, split: SplitTag) -> Result<LabeledImageSet> {
    let imgs = read_idx_images(images)?;
    let lbls = read_idx_labels(labels)?;
    if imgs.dim(0) != lbls.len() {
        return Err(Error::Data(format!(
            "{} images in {} but {} labels in {}",
            imgs.dim(0),
            images.display(),
            lbls.len(),
            labels.display()
        )));
    }
    let classes = lbls.iter().copied().max().unwrap_or(0) as usize + 1;
    LabeledImageSet::new(imgs, lbls, classes.max(2), split)
}

// --- synthetic data ---

/// Parameters of the synthetic class-conditional image generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub size: usize,
    pub per_class: usize,
    /// 0 is nearly noise-free and linearly separable; 1 is heavily corrupted.
    pub difficulty: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig("synthetic data needs at least 2 classes".into()));
        }
        if self.size < 4 {
            return Err(Error::InvalidConfig("synthetic image side must be at least 4".into()));
        }
        if self.per_class < 5 {
            return Err(Error::InvalidConfig("need at least 5 samples per class".into()));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::InvalidConfig("difficulty must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Deterministic synthetic dataset: each class is an oriented sinusoidal
/// grating with a class-keyed phase per color channel, plus seeded Gaussian
/// pixel noise scaled by difficulty. Splits are a fixed 60/20/20 per class.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(LabeledImageSet, LabeledImageSet, LabeledImageSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise_amp = 0.02 + 0.4 * spec.difficulty;
    let size = spec.size;
    let stride = size * size * 3;

    let val_per_class = spec.per_class / 5;
    let test_per_class = spec.per_class / 5;
    let train_per_class = spec.per_class - val_per_class - test_per_class;

    let mut sets: Vec<(Vec<f32>, Vec<u32>)> =
        vec![(Vec::new(), Vec::new()), (Vec::new(), Vec::new()), (Vec::new(), Vec::new())];

    for class in 0..spec.classes {
        let theta = std::f64::consts::PI * class as f64 / spec.classes as f64;
        let (sin_t, cos_t) = theta.sin_cos();
        let freq = 2.0 * std::f64::consts::TAU / size as f64;
        let phase = 2.39996 * class as f64; // golden-angle spacing between classes
        for sample in 0..spec.per_class {
            let mut img = vec![0.0f32; stride];
            for y in 0..size {
                for x in 0..size {
                    let proj = x as f64 * cos_t + y as f64 * sin_t;
                    for ch in 0..3 {
                        let base = 0.5 + 0.4 * (freq * proj + phase + ch as f64 * 2.1).sin();
                        let noise: f64 = {
                            use rand::Rng;
                            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                        };
                        let v = (base + noise_amp * noise).clamp(0.0, 1.0);
                        img[(y * size + x) * 3 + ch] = v as f32;
                    }
                }
            }
            let bucket = if sample < train_per_class {
                0
            } else if sample < train_per_class + val_per_class {
                1
            } else {
                2
            };
            sets[bucket].0.extend_from_slice(&img);
            sets[bucket].1.push(class as u32);
        }
    }

    let build = |(data, labels): (Vec<f32>, Vec<u32>), split: SplitTag| -> Result<LabeledImageSet> {
        let count = labels.len();
        LabeledImageSet::new(Tensor::new(vec![count, size, size, 3], data)?, labels, spec.classes, split)
    };
    let mut iter = sets.into_iter();
    let train = build(iter.next().unwrap(), SplitTag::Train)?;
    let val = build(iter.next().unwrap(), SplitTag::Val)?;
    let test = build(iter.next().unwrap(), SplitTag::Test)?;
    Ok((train, val, test))
}

// --- dataset profiles ---

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthSpec),
    Cifar10 { dir: PathBuf },
    /// Stub: the CIFAR-100 binary format is one coarse plus one fine label
    /// byte per 3072-byte pixel record; full-scale runs are out of scope.
    Cifar100 { dir: PathBuf },
    /// Stub: SVHN ships as MATLAB .mat containers (train_32x32.mat etc.);
    /// convert to idx and use the idx source instead.
    Svhn { dir: PathBuf },
    /// Stub: FER2013 ships as a CSV of 48x48 grayscale pixel strings.
    Fer2013 { path: PathBuf },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

/// A dataset plus the protocol knobs that belong to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub source: DataSource,
    /// Examples held out of the training split for validation (ignored for
    /// synthetic data, which carries fixed split ratios).
    pub val_size: usize,
    pub split_seed: u64,
    pub augment_crop: bool,
    pub augment_flip: bool,
}

impl DatasetProfile {
    pub fn synthetic(spec: SynthSpec) -> Self {
        DatasetProfile {
            source: DataSource::Synthetic(spec),
            val_size: 0,
            split_seed: 0,
            augment_crop: true,
            augment_flip: true,
        }
    }

    pub fn cifar10(dir: PathBuf) -> Self {
        DatasetProfile {
            source: DataSource::Cifar10 { dir },
            val_size: 5000,
            split_seed: 0,
            augment_crop: true,
            augment_flip: true,
        }
    }

    /// Digits do not survive mirroring: flipping is disabled.
    pub fn svhn(dir: PathBuf) -> Self {
        DatasetProfile {
            source: DataSource::Svhn { dir },
            val_size: 5000,
            split_seed: 0,
            augment_crop: true,
            augment_flip: false,
        }
    }

    /// (height, width, channels) this profile's images have.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match &self.source {
            DataSource::Synthetic(s) => (s.size, s.size, 3),
            DataSource::Cifar10 { .. } | DataSource::Cifar100 { .. } | DataSource::Svhn { .. } => (32, 32, 3),
            DataSource::Fer2013 { .. } => (48, 48, 1),
            DataSource::Idx { .. } => (28, 28, 1),
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.source {
            DataSource::Synthetic(s) => s.classes,
            DataSource::Cifar10 { .. } | DataSource::Svhn { .. } => 10,
            DataSource::Cifar100 { .. } => 100,
            DataSource::Fer2013 { .. } => 7,
            DataSource::Idx { .. } => 10,
        }
    }

    /// Loads, splits, and computes training statistics.
    pub fn prepare(&self) -> Result<DataSplits> {
        let (train, val, test) = match &self.source {
            DataSource::Synthetic(spec) => synth_dataset(spec)?,
            DataSource::Cifar10 { dir } => {
                let (train_full, test) = load_cifar10(dir)?;
                let (train, val) = split_validation(&train_full, self.val_size, self.split_seed)?;
                (train, val, test)
            }
            DataSource::Idx { train_images, train_labels, test_images, test_labels } => {
                let train_full = load_idx_pair(train_images, train_labels, SplitTag::Train)?;
                let test = load_idx_pair(test_images, test_labels, SplitTag::Test)?;
                let (train, val) = split_validation(&train_full, self.val_size, self.split_seed)?;
                (train, val, test)
            }
            DataSource::Cifar100 { .. } => {
                return Err(Error::Data(
                    "CIFAR-100 loader not implemented: records are 1 coarse + 1 fine label byte \
                     + 3072 pixel bytes; desk-scale runs use the synthetic source"
                        .into(),
                ))
            }
            DataSource::Svhn { .. } => {
                return Err(Error::Data(
                    "SVHN loader not implemented: convert the .mat containers to idx and use the \
                     idx source"
                        .into(),
                ))
            }
            DataSource::Fer2013 { .. } => {
                return Err(Error::Data(
                    "FER2013 loader not implemented: the CSV of 48x48 grayscale pixel strings is \
                     not parsed; desk-scale runs use the synthetic source"
                        .into(),
                ))
            }
        };
        let mean = compute_pixel_mean(&train);
        Ok(DataSplits { train, val, test, mean })
    }

    /// Parse a compact spec like
    /// `synthetic:classes=4,size=16,per_class=100,difficulty=0.1,seed=9` or
    /// `cifar10:dir=/data/cifar-10-batches-bin,val=5000`.
    /// Profile-level keys on any source: `val`, `split_seed`, `crop`, `flip`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut pairs = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("dataset spec item \"{part}\" is not key=value")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let parse_num = |what: &str, v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::Parse(format!("{what} \"{v}\" is not an integer")))
        };
        let parse_u64 = |what: &str, v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Parse(format!("{what} \"{v}\" is not an integer")))
        };
        let parse_flag = |what: &str, v: &str| -> Result<bool> {
            match v {
                "on" | "true" | "1" => Ok(true),
                "off" | "false" | "0" => Ok(false),
                other => Err(Error::Parse(format!("{what} \"{other}\" is not on/off"))),
            }
        };

        let mut profile = match kind.trim() {
            "synthetic" => {
                let spec = SynthSpec {
                    classes: parse_num("classes", get("classes").unwrap_or("4"))?,
                    size: parse_num("size", get("size").unwrap_or("16"))?,
                    per_class: parse_num("per_class", get("per_class").unwrap_or("100"))?,
                    difficulty: get("difficulty")
                        .unwrap_or("0.1")
                        .parse()
                        .map_err(|_| Error::Parse("difficulty is not a number".into()))?,
                    seed: parse_u64("seed", get("seed").unwrap_or("0"))?,
                };
                DatasetProfile::synthetic(spec)
            }
            "cifar10" => {
                let dir = get("dir").ok_or_else(|| Error::Parse("cifar10 needs dir=<path>".into()))?;
                DatasetProfile::cifar10(PathBuf::from(dir))
            }
            "svhn" => {
                let dir = get("dir").ok_or_else(|| Error::Parse("svhn needs dir=<path>".into()))?;
                DatasetProfile::svhn(PathBuf::from(dir))
            }
            "cifar100" => {
                let dir = get("dir").ok_or_else(|| Error::Parse("cifar100 needs dir=<path>".into()))?;
                DatasetProfile {
                    source: DataSource::Cifar100 { dir: PathBuf::from(dir) },
                    val_size: 5000,
                    split_seed: 0,
                    augment_crop: true,
                    augment_flip: true,
                }
            }
            "fer2013" => {
                let path = get("path").ok_or_else(|| Error::Parse("fer2013 needs path=<csv>".into()))?;
                DatasetProfile {
                    source: DataSource::Fer2013 { path: PathBuf::from(path) },
                    val_size: 0,
                    split_seed: 0,
                    augment_crop: true,
                    augment_flip: true,
                }
            }
            "idx" => {
                let need = |key: &str| -> Result<PathBuf> {
                    get(key)
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Parse(format!("idx needs {key}=<path>")))
                };
                DatasetProfile {
                    source: DataSource::Idx {
                        train_images: need("train_images")?,
                        train_labels: need("train_labels")?,
                        test_images: need("test_images")?,
                        test_labels: need("test_labels")?,
                    },
                    val_size: 5000,
                    split_seed: 0,
                    augment_crop: true,
                    augment_flip: true,
                }
            }
            other => return Err(Error::Parse(format!("unknown dataset kind \"{other}\""))),
        };

        if let Some(v) = get("val") {
            profile.val_size = parse_num("val size", v)?;
        }
        if let Some(v) = get("split_seed") {
            profile.split_seed = parse_u64("split seed", v)?;
        }
        if let Some(v) = get("crop") {
            profile.augment_crop = parse_flag("crop", v)?;
        }
        if let Some(v) = get("flip") {
            profile.augment_flip = parse_flag("flip", v)?;
        }
        Ok(profile)
    }
}

/// Prepared train/val/test splits with the training-set pixel mean.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: LabeledImageSet,
    pub val: LabeledImageSet,
    pub test: LabeledImageSet,
    /// Per-pixel mean of `train` only.
    pub mean: Tensor<f32>,
}
