//! Datasets: IDX files and seeded synthetic generators.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::constraints::Target;
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 2051;
const IDX_LABELS: u32 = 2049;

/// Labeled inputs inside declared per-coordinate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Target>,
    /// Number of output labels `n`.
    pub num_labels: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<Target>,
        num_labels: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: inputs.len(), got: targets.len() });
        }
        let m = lower.len();
        if upper.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: upper.len() });
        }
        for x in &inputs {
            if x.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: x.len() });
            }
            if x.iter().zip(&lower).zip(&upper).any(|((v, l), u)| !(v >= l && v <= u)) {
                return Err(Error::Contract("input outside declared bounds".into()));
            }
        }
        for t in &targets {
            match t {
                Target::Class(c) if *c >= num_labels => {
                    return Err(Error::IndexOutOfBounds { index: *c, len: num_labels });
                }
                Target::Labels(v) if v.len() != num_labels => {
                    return Err(Error::DimensionMismatch { expected: num_labels, got: v.len() });
                }
                _ => {}
            }
        }
        Ok(Dataset { inputs, targets, num_labels, lower, upper })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.lower.len()
    }

    /// The first `k` samples (or all, if fewer).
    pub fn head(&self, k: usize) -> Dataset {
        let k = k.min(self.len());
        Dataset {
            inputs: self.inputs[..k].to_vec(),
            targets: self.targets[..k].to_vec(),
            num_labels: self.num_labels,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header ({what})")))
}

/// Parsed IDX image file: `count` images of `rows × cols` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES {
        return Err(Error::Idx(format!("bad image magic {magic}, expected {IDX_IMAGES}")));
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| Error::Idx("image dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Idx(format!("truncated pixels: {} of {need} bytes", body.len())));
    }
    Ok(IdxImages { count, rows, cols, pixels: body[..need].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS {
        return Err(Error::Idx(format!("bad label magic {magic}, expected {IDX_LABELS}")));
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Idx(format!("truncated labels: {} of {count} bytes", body.len())));
    }
    Ok(body[..count].to_vec())
}

/// Encodes images in the IDX format.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Encodes labels in the IDX format.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Averages `b × b` pixel blocks into a `(rows/b) × (cols/b)` image on
/// `[0, 1]`.
fn downsample(img: &[u8], rows: usize, cols: usize, d: usize) -> Result<Vec<f64>> {
    if d == 0 || rows % d != 0 || cols % d != 0 {
        return Err(Error::Config(format!("cannot downsample {rows}x{cols} to {d}x{d}")));
    }
    let (br, bc) = (rows / d, cols / d);
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0u32;
            for r in i * br..(i + 1) * br {
                for c in j * bc..(j + 1) * bc {
                    s += img[r * cols + c] as u32;
                }
            }
            out.push(s as f64 / (255.0 * (br * bc) as f64));
        }
    }
    Ok(out)
}

/// Reads an IDX image/label pair. Pixels are scaled by `1/255`; with
/// `downsample_to = Some(d)` images are block-averaged to `d × d`.
pub fn load_idx(images: &Path, labels: &Path, downsample_to: Option<usize>) -> Result<Dataset> {
    let imgs = parse_idx_images(&std::fs::read(images)?)?;
    let labs = parse_idx_labels(&std::fs::read(labels)?)?;
    if imgs.count != labs.len() {
        return Err(Error::Idx(format!("{} images but {} labels", imgs.count, labs.len())));
    }
    let px = imgs.rows * imgs.cols;
    let mut inputs = Vec::with_capacity(imgs.count);
    for k in 0..imgs.count {
        let img = &imgs.pixels[k * px..(k + 1) * px];
        inputs.push(match downsample_to {
            Some(d) => downsample(img, imgs.rows, imgs.cols, d)?,
            None => img.iter().map(|&b| b as f64 / 255.0).collect(),
        });
    }
    let dim = inputs.first().map_or(downsample_to.map_or(px, |d| d * d), Vec::len);
    let num_labels = labs.iter().copied().max().map_or(1, |m| m as usize + 1);
    let targets = labs.iter().map(|&l| Target::Class(l as usize)).collect();
    Dataset::new(inputs, targets, num_labels, vec![0.0; dim], vec![1.0; dim])
}

fn blob_center(c: usize, k: usize, m: usize) -> Vec<f64> {
    let mut center = vec![0.5; m];
    if m == 1 {
        center[0] = 0.2 + 0.6 * c as f64 / (k - 1) as f64;
    } else {
        let a = std::f64::consts::TAU * c as f64 / k as f64;
        center[0] = 0.5 + 0.3 * a.cos();
        center[1] = 0.5 + 0.3 * a.sin();
    }
    center
}

/// Isotropic Gaussian blobs in `[0, 1]^m`.
///
/// Class centers sit on a circle of radius 0.3 around the middle of the
/// cube (on a line for `m = 1`); the standard deviation is
/// `0.1 / separation`. Points are clipped to the cube and interleaved by
/// class.
pub fn gen_blobs(seed: u64, per_class: usize, k: usize, m: usize, separation: f64) -> Result<Dataset> {
    if k < 2 || m == 0 {
        return Err(Error::Config(format!("blobs need k >= 2 and m >= 1, got k={k}, m={m}")));
    }
    if !(separation > 0.0) {
        return Err(Error::Config(format!("separation must be positive, got {separation}")));
    }
    let noise = Normal::new(0.0, 0.1 / separation).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|c| blob_center(c, k, m)).collect();
    let mut inputs = Vec::with_capacity(per_class * k);
    let mut targets = Vec::with_capacity(per_class * k);
    for _ in 0..per_class {
        for (c, center) in centers.iter().enumerate() {
            inputs.push(center.iter().map(|&mu| (mu + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect());
            targets.push(Target::Class(c));
        }
    }
    Dataset::new(inputs, targets, k, vec![0.0; m], vec![1.0; m])
}

/// Dice-like multi-label data with six faces in three opposite pairs
/// `(0,5)`, `(1,4)`, `(2,3)`.
///
/// Each sample shows one or two faces, never an opposite pair. Input `j`
/// is near 0.75 when face `j` is visible and near 0.25 otherwise.
pub fn gen_dice(seed: u64, count: usize, noise: f64) -> Result<Dataset> {
    const PAIRS: [(usize, usize); 3] = [(0, 5), (1, 4), (2, 3)];
    let dist = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut present = [false; 6];
        let first = rng.random_range(0..3);
        let (a, b) = PAIRS[first];
        present[if rng.random_bool(0.5) { a } else { b }] = true;
        if rng.random_bool(0.5) {
            let second = (first + rng.random_range(1..3)) % 3;
            let (a, b) = PAIRS[second];
            present[if rng.random_bool(0.5) { a } else { b }] = true;
        }
        let x = present
            .iter()
            .map(|&p| ((if p { 0.75 } else { 0.25 }) + dist.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        inputs.push(x);
        targets.push(Target::Labels(present.to_vec()));
    }
    Dataset::new(inputs, targets, 6, vec![0.0; 6], vec![1.0; 6])
}

/// Where a dataset comes from, in the text form
/// `blobs:seed=S,per_class=N,classes=K,dim=M,separation=R`,
/// `dice:seed=S,count=N,noise=R` or
/// `idx:images=PATH,labels=PATH[,downsample=D]`.
///
/// Relative IDX paths are resolved against the data directory passed to
/// [`DataSource::load`].
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs { seed: u64, per_class: usize, classes: usize, dim: usize, separation: f64 },
    Dice { seed: u64, count: usize, noise: f64 },
    Idx { images: PathBuf, labels: PathBuf, downsample: Option<usize> },
}

impl DataSource {
    pub fn load(&self, data_dir: Option<&Path>) -> Result<Dataset> {
        let resolve = |p: &Path| match data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        };
        match self {
            DataSource::Blobs { seed, per_class, classes, dim, separation } => {
                gen_blobs(*seed, *per_class, *classes, *dim, *separation)
            }
            DataSource::Dice { seed, count, noise } => gen_dice(*seed, *count, *noise),
            DataSource::Idx { images, labels, downsample } => {
                load_idx(&resolve(images), &resolve(labels), *downsample)
            }
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in data source, got {part:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: FromStr>(kv: &mut std::collections::BTreeMap<String, String>, k: &str, default: Option<T>) -> Result<T> {
            match kv.remove(k) {
                Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {k}"))),
                None => default.ok_or_else(|| Error::Config(format!("data source needs {k}"))),
            }
        }
        let src = match kind {
            "blobs" => DataSource::Blobs {
                seed: get(&mut kv, "seed", Some(0))?,
                per_class: get(&mut kv, "per_class", Some(100))?,
                classes: get(&mut kv, "classes", Some(3))?,
                dim: get(&mut kv, "dim", Some(2))?,
                separation: get(&mut kv, "separation", Some(1.0))?,
            },
            "dice" => DataSource::Dice {
                seed: get(&mut kv, "seed", Some(0))?,
                count: get(&mut kv, "count", Some(300))?,
                noise: get(&mut kv, "noise", Some(0.05))?,
            },
            "idx" => DataSource::Idx {
                images: get::<PathBuf>(&mut kv, "images", None)?,
                labels: get::<PathBuf>(&mut kv, "labels", None)?,
                downsample: match kv.remove("downsample") {
                    None => None,
                    Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("bad downsample {v:?}")))?),
                },
            },
            other => return Err(Error::Config(format!("unknown data source {other:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown data source key {k:?}")));
        }
        Ok(src)
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Blobs { seed, per_class, classes, dim, separation } => write!(
                f,
                "blobs:seed={seed},per_class={per_class},classes={classes},dim={dim},separation={separation}"
            ),
            DataSource::Dice { seed, count, noise } => write!(f, "dice:seed={seed},count={count},noise={noise}"),
            DataSource::Idx { images, labels, downsample } => {
                write!(f, "idx:images={},labels={}", images.display(), labels.display())?;
                if let Some(d) = downsample {
                    write!(f, ",downsample={d}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..4 * 2 * 2).map(|i| (i * 17) as u8).collect();
        let mut pixels = pixels;
        pixels[0] = 255;
        std::fs::write(dir.path().join("img"), encode_idx_images(2, 2, &pixels)).unwrap();
        std::fs::write(dir.path().join("lab"), encode_idx_labels(&[3, 1, 4, 1])).unwrap();
        let ds = load_idx(&dir.path().join("img"), &dir.path().join("lab"), None).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.input_dim(), 4);
        assert_eq!(ds.inputs[0][0], 1.0);
        assert_eq!(ds.targets[2], Target::Class(4));
        assert_eq!(ds.num_labels, 5);
        let small = load_idx(&dir.path().join("img"), &dir.path().join("lab"), Some(1)).unwrap();
        assert_eq!(small.input_dim(), 1);
        let mean = (255 + 17 + 34 + 51) as f64 / (4.0 * 255.0);
        assert!((small.inputs[0][0] - mean).abs() < 1e-15);
    }

    #[test]
    fn data_source_strings() {
        let s: DataSource = "blobs:seed=3,per_class=5".parse().unwrap();
        assert_eq!(s, DataSource::Blobs { seed: 3, per_class: 5, classes: 3, dim: 2, separation: 1.0 });
        assert_eq!(s.to_string().parse::<DataSource>().unwrap(), s);
        assert_eq!(s.load(None).unwrap().len(), 15);
        assert!("idx:images=a".parse::<DataSource>().is_err());
        assert!("blobs:colour=red".parse::<DataSource>().is_err());
        assert!("csv".parse::<DataSource>().is_err());
    }

    #[test]
    fn idx_errors() {
        let mut bad = encode_idx_images(2, 2, &[0; 8]);
        bad[3] = 0x04;
        assert!(matches!(parse_idx_images(&bad), Err(Error::Idx(_))));
        let good = encode_idx_images(2, 2, &[0; 8]);
        assert!(parse_idx_images(&good[..good.len() - 1]).is_err());
        assert!(parse_idx_images(&good[..10]).is_err());
        assert!(parse_idx_labels(&encode_idx_images(1, 1, &[0])).is_err());
        let lab = encode_idx_labels(&[1, 2, 3]);
        assert!(parse_idx_labels(&lab[..lab.len() - 1]).is_err());
    }

    #[test]
    fn blobs_are_deterministic_and_clipped() {
        let a = gen_blobs(5, 20, 3, 2, 1.0).unwrap();
        assert_eq!(a, gen_blobs(5, 20, 3, 2, 1.0).unwrap());
        assert_ne!(a, gen_blobs(6, 20, 3, 2, 1.0).unwrap());
        assert_eq!(a.len(), 60);
        assert!(a.inputs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        let wide = gen_blobs(1, 50, 4, 3, 0.05).unwrap();
        assert!(wide.inputs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(gen_blobs(1, 1, 1, 2, 1.0).is_err());
    }

    #[test]
    fn dice_never_shows_opposite_faces() {
        let d = gen_dice(3, 200, 0.05).unwrap();
        for t in &d.targets {
            let Target::Labels(p) = t else { panic!() };
            assert!(p.iter().any(|&x| x));
            for (a, b) in [(0, 5), (1, 4), (2, 3)] {
                assert!(!(p[a] && p[b]));
            }
        }
    }
}
