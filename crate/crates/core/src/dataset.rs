//! IDX loading for MNIST-family datasets.
//!
//! Layout convention: `<root>/<dataset>/{train,t10k}-{images,labels}-idx?-ubyte[.gz]`.
//! Gzip is detected from the `1f 8b` magic, not the file name.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ClassId;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// Labels in these datasets are digits 0..=9.
pub const NUM_LABELS: u8 = 10;

/// Raw image tensor as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

/// How raw bytes map to feature values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelScale {
    /// Bytes used as-is, 0..=255.
    #[default]
    Raw,
    /// Bytes divided by 255.
    Unit,
}

impl PixelScale {
    #[inline]
    pub fn apply(self, byte: u8) -> f64 {
        match self {
            PixelScale::Raw => byte as f64,
            PixelScale::Unit => byte as f64 / 255.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PixelScale::Raw => "raw",
            PixelScale::Unit => "unit",
        }
    }
}

impl std::str::FromStr for PixelScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(PixelScale::Raw),
            "unit" => Ok(PixelScale::Unit),
            other => Err(Error::InvalidConfig(format!("unknown pixel scale {other:?}"))),
        }
    }
}

/// Maps bytes to features, row-major.
pub fn normalize(bytes: &[u8], scale: PixelScale) -> Vec<f64> {
    bytes.iter().map(|&b| scale.apply(b)).collect()
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes
        .get(offset..offset + 4)
        .ok_or(Error::TruncatedFile {
            expected: offset + 4,
            found: bytes.len(),
        })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_LABELS) {
        return Err(Error::LabelOutOfRange(bad));
    }
    Ok(labels)
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&read_maybe_gz(path.as_ref())?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gz(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Resolves the images and labels files for one split, preferring the
/// uncompressed name when both exist.
pub fn split_paths(root: &Path, dataset: &str, split: Split) -> Result<(PathBuf, PathBuf)> {
    let dir = root.join(dataset);
    let find = |kind: &str, idx: u8| -> Result<PathBuf> {
        let base = format!("{}-{kind}-idx{idx}-ubyte", split.prefix());
        for name in [base.clone(), format!("{base}.gz")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", dir.join(base).display()),
        )))
    };
    Ok((find("images", 3)?, find("labels", 1)?))
}

/// Images and labels of one split, kept as bytes; features are produced on
/// demand with the configured [`PixelScale`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    dim: usize,
    scale: PixelScale,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, images: IdxImages, labels: Vec<u8>, scale: PixelScale) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::SizeMismatch {
                images: images.count,
                labels: labels.len(),
            });
        }
        if images.count == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            name: name.into(),
            dim: images.rows * images.cols,
            scale,
            pixels: images.pixels,
            labels,
        })
    }

    /// Builds a dataset directly from flat bytes; used by tests and
    /// synthetic workloads.
    pub fn from_bytes(name: impl Into<String>, dim: usize, pixels: Vec<u8>, labels: Vec<u8>, scale: PixelScale) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        let images = IdxImages {
            count: pixels.len() / dim,
            rows: 1,
            cols: dim,
            pixels,
        };
        if images.count * dim != images.pixels.len() {
            return Err(Error::DimMismatch {
                expected: images.count * dim,
                found: images.pixels.len(),
            });
        }
        Self::new(name, images, labels, scale)
    }

    /// Loads `<root>/<dataset>/` for one split.
    pub fn load(root: impl AsRef<Path>, dataset: &str, split: Split, scale: PixelScale) -> Result<Self> {
        let (images, labels) = split_paths(root.as_ref(), dataset, split)?;
        Self::new(dataset, load_idx_images(images)?, load_idx_labels(labels)?, scale)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> PixelScale {
        self.scale
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i] as ClassId
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn raw_image(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        normalize(self.raw_image(i), self.scale)
    }

    /// Writes sample `i` into `buf`, reusing its allocation.
    pub fn sample_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.raw_image(i).iter().map(|&b| self.scale.apply(b)));
    }

    /// Sorted list of labels present.
    pub fn classes(&self) -> Vec<ClassId> {
        self.class_counts().into_keys().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l as ClassId).or_insert(0) += 1;
        }
        counts
    }

    /// Indices of each class in dataset order.
    pub fn indices_by_class(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut out: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l as ClassId).or_default().push(i);
        }
        out
    }

    pub fn with_scale(mut self, scale: PixelScale) -> Self {
        self.scale = scale;
        self
    }

    /// Keeps `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.raw_image(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            name: self.name.clone(),
            dim: self.dim,
            scale: self.scale,
            pixels,
            labels,
        }
    }

    /// Exactly `per_class` samples of every class, chosen by a seeded
    /// shuffle. Selected samples keep their original relative order.
    pub fn subsample(&self, per_class: usize, seed: u64) -> Result<LabeledDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::new();
        for (class, mut indices) in self.indices_by_class() {
            if indices.len() < per_class {
                return Err(Error::InsufficientSamples {
                    class,
                    available: indices.len(),
                    requested: per_class,
                });
            }
            indices.shuffle(&mut rng);
            keep.extend_from_slice(&indices[..per_class]);
        }
        keep.sort_unstable();
        Ok(self.select(&keep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_images_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn parses_hand_built_images() {
        let bytes = idx_images_bytes(2, 2, 2, &[0, 255, 128, 64, 1, 2, 3, 4]);
        let img = parse_idx_images(&bytes).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (2, 2, 2));
        assert_eq!(img.image(0), &[0, 255, 128, 64]);
        assert_eq!(img.image(1), &[1, 2, 3, 4]);
    }

    #[test]
    fn rejects_label_magic_for_images() {
        let bytes = idx_labels_bytes(&[1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::BadMagic { expected: IMAGES_MAGIC, found: LABELS_MAGIC })
        ));
    }

    #[test]
    fn rejects_truncated_files() {
        let mut bytes = idx_images_bytes(2, 2, 2, &[0; 8]);
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::TruncatedFile { expected: 24, found: 23 })));
        assert!(matches!(parse_idx_images(&bytes[..6]), Err(Error::TruncatedFile { .. })));
        let labels = idx_labels_bytes(&[0, 1]);
        assert!(matches!(parse_idx_labels(&labels[..9]), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn parses_labels() {
        assert_eq!(parse_idx_labels(&idx_labels_bytes(&[0, 9, 5])).unwrap(), vec![0, 9, 5]);
        assert!(matches!(parse_idx_labels(&idx_labels_bytes(&[0, 10])), Err(Error::LabelOutOfRange(10))));
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let bytes = idx_labels_bytes(&[3, 1, 4]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&bytes).unwrap();
        let path = dir.path().join("labels.gz");
        fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx_labels(&path).unwrap(), vec![3, 1, 4]);
    }

    #[test]
    fn loads_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let ds_dir = dir.path().join("toy");
        fs::create_dir(&ds_dir).unwrap();
        fs::write(ds_dir.join("train-images-idx3-ubyte"), idx_images_bytes(3, 1, 2, &[0, 255, 10, 20, 30, 40])).unwrap();
        fs::write(ds_dir.join("train-labels-idx1-ubyte"), idx_labels_bytes(&[1, 0, 1])).unwrap();
        let ds = LabeledDataset::load(dir.path(), "toy", Split::Train, PixelScale::Unit).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.sample(0), vec![0.0, 1.0]);
        assert!(LabeledDataset::load(dir.path(), "toy", Split::Test, PixelScale::Unit).is_err());
    }

    #[test]
    fn pairing_checks_counts() {
        let images = parse_idx_images(&idx_images_bytes(2, 1, 1, &[1, 2])).unwrap();
        assert!(matches!(
            LabeledDataset::new("x", images, vec![0, 1, 2], PixelScale::Raw),
            Err(Error::SizeMismatch { images: 2, labels: 3 })
        ));
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize(&[0, 255, 128], PixelScale::Unit), vec![0.0, 1.0, 128.0 / 255.0]);
        assert_eq!(normalize(&[0, 255, 128], PixelScale::Raw), vec![0.0, 255.0, 128.0]);
    }

    #[test]
    fn normalize_inverts() {
        let bytes: Vec<u8> = (0..=255).collect();
        let back: Vec<u8> = normalize(&bytes, PixelScale::Unit)
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        assert_eq!(back, bytes);
    }

    fn toy(per_class: &[usize]) -> LabeledDataset {
        let mut labels = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat(c as u8).take(n));
        }
        let pixels: Vec<u8> = (0..labels.len()).map(|i| i as u8).collect();
        LabeledDataset::from_bytes("toy", 1, pixels, labels, PixelScale::Raw).unwrap()
    }

    #[test]
    fn subsample_counts_and_bounds() {
        let ds = toy(&[5, 7, 6]);
        let one = ds.subsample(1, 3).unwrap();
        assert_eq!(one.len(), 3);
        assert!(one.class_counts().values().all(|&n| n == 1));

        let same = ds.subsample(5, 3).unwrap();
        assert_eq!(same.class_counts().values().copied().collect::<Vec<_>>(), vec![5, 5, 5]);

        let full = toy(&[4, 4]).subsample(4, 9).unwrap();
        assert_eq!(full, toy(&[4, 4]));

        assert!(matches!(
            ds.subsample(6, 0),
            Err(Error::InsufficientSamples { class: 0, available: 5, requested: 6 })
        ));
    }

    #[test]
    fn subsample_depends_on_seed() {
        let ds = toy(&[50, 50]);
        let a = ds.subsample(10, 1).unwrap();
        let b = ds.subsample(10, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, ds.subsample(10, 1).unwrap());
    }
}
