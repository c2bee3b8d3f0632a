//! Image I/O, bicubic ×4 degradation, patch cropping, dihedral
//! augmentation and on-disk dataset generation.
//!
//! Pixels live in `[0, 255]` as f32. Models consume `/255` tensors; see
//! [`to_unit`] / [`from_unit`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{resize, ResizeSpec, Shape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Decode { path: PathBuf, detail: String },
    #[error("{path}: unsupported pixel format {format}; only 8-bit RGB is accepted")]
    UnsupportedFormat { path: PathBuf, format: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// `round(clamp(v, 0, 255))` for every element.
pub fn quantize(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 255.0).round())
}

pub fn to_unit(t: &Tensor) -> Tensor {
    t.map(|v| v / 255.0)
}

pub fn from_unit(t: &Tensor) -> Tensor {
    t.map(|v| v * 255.0)
}

/// Reads an 8-bit RGB PNG as a `(1, 3, H, W)` tensor.
pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| DataError::Decode { path: path.to_path_buf(), detail: e.to_string() })?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            return Err(DataError::UnsupportedFormat {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| raw[(y * w + x) * 3 + c] as f32))
}

/// Writes a `(1, 3, H, W)` tensor as an 8-bit RGB PNG, clamping and
/// rounding each value.
pub fn save_png(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(DataError::Invalid(format!("save_png expects (1, 3, H, W), got {s}")));
    }
    let mut raw = vec![0u8; s.h * s.w * 3];
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                raw[(y * s.w + x) * 3 + c] = t.at(0, c, y, x).clamp(0.0, 255.0).round() as u8;
            }
        }
    }
    let img = image::RgbImage::from_raw(s.w as u32, s.h as u32, raw).expect("buffer sized to image");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DataError::Decode { path: path.to_path_buf(), detail: e.to_string() })
}

/// Bicubic ×1/4 with antialiasing, clamped to `[0, 255]`. Spatial dims must
/// be divisible by 4.
pub fn degrade_bicubic_x4(hr: &Tensor) -> Result<Tensor> {
    let s = hr.shape();
    if !s.h.is_multiple_of(4) || !s.w.is_multiple_of(4) || s.h == 0 || s.w == 0 {
        return Err(DataError::Invalid(format!("HR size {}x{} is not divisible by 4", s.h, s.w)));
    }
    let lr = resize(hr, &ResizeSpec::bicubic(0.25))?;
    Ok(lr.map(|v| v.clamp(0.0, 255.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub id: String,
    pub hr: Tensor,
    pub lr: Tensor,
}

impl ImagePair {
    /// Pairs `hr` with its degraded counterpart.
    pub fn from_hr(id: impl Into<String>, hr: Tensor) -> Result<Self> {
        let lr = degrade_bicubic_x4(&hr)?;
        Ok(ImagePair { id: id.into(), hr, lr })
    }

    pub fn new(id: impl Into<String>, hr: Tensor, lr: Tensor) -> Result<Self> {
        let (h, l) = (hr.shape(), lr.shape());
        if h.n != l.n || h.c != l.c || h.h != 4 * l.h || h.w != 4 * l.w {
            return Err(DataError::Invalid(format!("HR {h} is not 4x LR {l}")));
        }
        Ok(ImagePair { id: id.into(), hr, lr })
    }
}

/// Spatial window `[y, y+h) × [x, x+w)`.
pub fn crop(t: &Tensor, y: usize, x: usize, h: usize, w: usize) -> Result<Tensor> {
    let s = t.shape();
    if y + h > s.h || x + w > s.w || h == 0 || w == 0 {
        return Err(DataError::Invalid(format!("crop {h}x{w} at ({y}, {x}) outside {}x{}", s.h, s.w)));
    }
    Ok(Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, yy, xx| t.at(n, c, y + yy, x + xx)))
}

/// `count` aligned HR/LR patch pairs at seeded random positions. HR corners
/// sit on multiples of 4 so the LR patch is the matching window of the
/// precomputed LR image.
pub fn crop_patches(pair: &ImagePair, hr_patch: usize, count: usize, seed: u64) -> Result<Vec<ImagePair>> {
    let s = pair.hr.shape();
    if hr_patch == 0 || !hr_patch.is_multiple_of(4) {
        return Err(DataError::Invalid(format!("patch size {hr_patch} must be a positive multiple of 4")));
    }
    if hr_patch > s.h || hr_patch > s.w {
        return Err(DataError::Invalid(format!("patch {hr_patch} larger than image {}x{}", s.h, s.w)));
    }
    let lp = hr_patch / 4;
    let (ly_max, lx_max) = (pair.lr.shape().h - lp, pair.lr.shape().w - lp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let ly = rng.random_range(0..=ly_max);
            let lx = rng.random_range(0..=lx_max);
            Ok(ImagePair {
                id: format!("{}_p{i}", pair.id),
                hr: crop(&pair.hr, 4 * ly, 4 * lx, hr_patch, hr_patch)?,
                lr: crop(&pair.lr, ly, lx, lp, lp)?,
            })
        })
        .collect()
}

/// One of the eight flip/rotation transforms. Bit 2 transposes, then bit 1
/// flips vertically, then bit 0 flips horizontally.
pub fn augment8(t: &Tensor, index: usize) -> Result<Tensor> {
    if index >= 8 {
        return Err(DataError::Invalid(format!("augmentation index {index} not in 0..8")));
    }
    let s = t.shape();
    let (hflip, vflip, transpose) = (index & 1 != 0, index & 2 != 0, index & 4 != 0);
    let (oh, ow) = if transpose { (s.w, s.h) } else { (s.h, s.w) };
    Ok(Tensor::from_fn(Shape::new(s.n, s.c, oh, ow), |n, c, y, x| {
        let x = if hflip { ow - 1 - x } else { x };
        let y = if vflip { oh - 1 - y } else { y };
        if transpose {
            t.at(n, c, x, y)
        } else {
            t.at(n, c, y, x)
        }
    }))
}

/// Index of the transform that undoes `augment8(_, index)`.
pub fn augment8_inverse(index: usize) -> usize {
    if index & 4 == 0 {
        index
    } else {
        4 | ((index & 1) << 1) | ((index & 2) >> 1)
    }
}

/// Deterministic synthetic HR image: gradients, a disc, stripes and
/// seeded noise, in `[0, 255]`.
pub fn synthetic_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let freq = rng.random_range(2.0f32..8.0);
    let (cy, cx) = (rng.random_range(0.25..0.75) * h as f32, rng.random_range(0.25..0.75) * w as f32);
    let radius = rng.random_range(0.15f32..0.35) * h.min(w) as f32;
    let noise: Vec<f32> = (0..3 * h * w).map(|_| rng.random_range(-8.0f32..8.0)).collect();
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        let (fy, fx) = (y as f32 / h as f32, x as f32 / w as f32);
        let grad = 255.0 * (0.5 * fx + 0.3 * fy + 0.2 * phase[c]);
        let stripes = 40.0 * (std::f32::consts::TAU * (freq * fx + phase[c])).sin();
        let d = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)).sqrt();
        let disc = if d < radius { 60.0 } else { 0.0 };
        (grad * 0.7 + stripes + disc + noise[(c * h + y) * w + x]).clamp(0.0, 255.0).round()
    })
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub id: String,
    pub hr: String,
    pub lr: String,
    pub hr_size: [usize; 2],
    pub lr_size: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub file: String,
    pub reason: String,
}

/// Result of degrading a directory; file names are relative to the HR and
/// LR directories.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<ManifestPair>,
    pub skipped: Vec<Skipped>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Degrades every PNG in `hr_dir` into `lr_dir` (same file names) and
/// writes `lr_dir/manifest.json`. Unreadable or non-divisible images are
/// listed under `skipped`.
pub fn degrade_dir(hr_dir: impl AsRef<Path>, lr_dir: impl AsRef<Path>) -> Result<Manifest> {
    let (hr_dir, lr_dir) = (hr_dir.as_ref(), lr_dir.as_ref());
    let files = list_pngs(hr_dir)?;
    fs::create_dir_all(lr_dir).map_err(io_err(lr_dir))?;
    let results: Vec<std::result::Result<ManifestPair, Skipped>> = files
        .par_iter()
        .map(|path| {
            let name = file_name(path);
            let skip = |e: DataError| Skipped { file: name.clone(), reason: e.to_string() };
            let hr = load_png(path).map_err(skip)?;
            let lr = degrade_bicubic_x4(&hr).map_err(skip)?;
            save_png(&lr, lr_dir.join(&name)).map_err(skip)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(ManifestPair {
                id: stem,
                hr: name.clone(),
                lr: name.clone(),
                hr_size: [hr.shape().h, hr.shape().w],
                lr_size: [lr.shape().h, lr.shape().w],
            })
        })
        .collect();
    let mut manifest = Manifest::default();
    for r in results {
        match r {
            Ok(p) => manifest.pairs.push(p),
            Err(s) => manifest.skipped.push(s),
        }
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = lr_dir.join(MANIFEST_FILE);
    fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// Writes `count` synthetic `size × size` HR images to `root/HR` and their
/// degraded versions to `root/LR`.
pub fn synthesize_dataset(root: impl AsRef<Path>, count: usize, size: usize, seed: u64) -> Result<Manifest> {
    let root = root.as_ref();
    let hr_dir = root.join("HR");
    fs::create_dir_all(&hr_dir).map_err(io_err(&hr_dir))?;
    for i in 0..count {
        save_png(&synthetic_image(size, size, seed.wrapping_add(i as u64)), hr_dir.join(format!("{i:04}.png")))?;
    }
    degrade_dir(&hr_dir, root.join("LR"))
}

/// Every PNG in `dir` as (file name, tensor), sorted by name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    list_pngs(dir)?
        .iter()
        .map(|p| Ok((file_name(p), load_png(p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pattern(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| (c * 100 + y * 10 + x) as f32)
    }

    #[test]
    fn png_round_trip_and_clamp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let mut t = Tensor::from_fn(Shape::new(1, 3, 5, 7), |_, c, y, x| ((c * 53 + y * 29 + x * 17) % 256) as f32);
        save_png(&t, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), t);
        t.set(0, 0, 0, 0, 255.7);
        t.set(0, 1, 0, 0, -3.0);
        t.set(0, 2, 0, 0, 10.4);
        save_png(&t, &p).unwrap();
        let back = load_png(&p).unwrap();
        assert_eq!(back, quantize(&t));
        assert_eq!(back.at(0, 0, 0, 0), 255.0);
    }

    #[test]
    fn grayscale_and_garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_pixel(4, 4, image::Luma([9])).save(&p).unwrap();
        assert!(matches!(load_png(&p), Err(DataError::UnsupportedFormat { .. })));
        let bad = dir.path().join("bad.png");
        fs::write(&bad, b"not a png").unwrap();
        assert!(matches!(load_png(&bad), Err(DataError::Decode { .. })));
    }

    #[test]
    fn degrade_constants_shapes_and_periodic_mean() {
        let c = Tensor::full(Shape::new(1, 3, 32, 32), 128.0);
        let lr = degrade_bicubic_x4(&c).unwrap();
        assert_eq!(lr.shape(), Shape::new(1, 3, 8, 8));
        assert!(lr.data().iter().all(|&v| (v - 128.0).abs() < 1e-3));
        assert_eq!(degrade_bicubic_x4(&Tensor::zeros(Shape::new(1, 3, 256, 256))).unwrap().shape().h, 64);
        assert!(degrade_bicubic_x4(&Tensor::zeros(Shape::new(1, 3, 30, 32))).is_err());

        // 4-periodic symmetric checker: every LR pixel sees whole periods.
        let period = [[10.0, 200.0, 200.0, 10.0], [90.0, 30.0, 30.0, 90.0], [90.0, 30.0, 30.0, 90.0], [10.0, 200.0, 200.0, 10.0]];
        let mean: f64 = period.iter().flatten().sum::<f64>() / 16.0;
        let hr = Tensor::from_fn(Shape::new(1, 3, 32, 32), |_, _, y, x| period[y % 4][x % 4] as f32);
        let lr = degrade_bicubic_x4(&hr).unwrap();
        assert!(lr.data().iter().all(|&v| (v as f64 - mean).abs() < 1e-3), "{:?}", &lr.data()[..8]);
    }

    #[test]
    fn degrade_is_affine_on_ramps() {
        let hr = Tensor::from_fn(Shape::new(1, 3, 32, 32), |_, c, y, x| 20.0 + 3.0 * x as f32 + 2.0 * y as f32 + c as f32);
        let lr = degrade_bicubic_x4(&hr).unwrap();
        // Interior LR pixel (i, j) centres on HR coordinate 4i + 1.5.
        for i in 2..6 {
            for j in 2..6 {
                let want = 20.0 + 3.0 * (4.0 * j as f32 + 1.5) + 2.0 * (4.0 * i as f32 + 1.5);
                assert!((lr.at(0, 0, i, j) - want).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn patches_are_aligned_and_seeded() {
        let hr = synthetic_image(64, 64, 3);
        let pair = ImagePair::from_hr("img", hr).unwrap();
        let a = crop_patches(&pair, 32, 4, 9).unwrap();
        assert_eq!(a, crop_patches(&pair, 32, 4, 9).unwrap());
        for p in &a {
            assert_eq!(p.lr.shape(), Shape::new(1, 3, 8, 8));
            let d = degrade_bicubic_x4(&p.hr).unwrap();
            for y in 2..6 {
                for x in 2..6 {
                    for c in 0..3 {
                        assert!((d.at(0, c, y, x) - p.lr.at(0, c, y, x)).abs() < 1e-3);
                    }
                }
            }
        }
        let whole = crop_patches(&pair, 64, 1, 0).unwrap();
        assert_eq!(whole[0].hr, pair.hr);
        assert_eq!(whole[0].lr, pair.lr);
        assert!(crop_patches(&pair, 68, 1, 0).is_err());
        assert!(crop_patches(&pair, 30, 1, 0).is_err());
        let big = ImagePair::from_hr("big", Tensor::zeros(Shape::new(1, 3, 640, 640))).unwrap();
        assert_eq!(crop_patches(&big, 640, 1, 0).unwrap()[0].lr.shape().h, 160);
    }

    #[test]
    fn dihedral_laws() {
        let t = pattern(2, 3);
        assert_eq!(augment8(&t, 0).unwrap(), t);
        let all: Vec<Tensor> = (0..8).map(|i| augment8(&t, i).unwrap()).collect();
        let distinct: HashSet<Vec<u32>> = all.iter().map(|a| a.data().iter().map(|v| v.to_bits()).collect()).collect();
        assert_eq!(distinct.len(), 8);
        let h = augment8(&t, 1).unwrap();
        assert_eq!(augment8(&h, 1).unwrap(), t);
        for i in 0..8 {
            let a = augment8(&t, i).unwrap();
            assert_eq!(augment8(&a, augment8_inverse(i)).unwrap(), t, "index {i}");
            let mut before: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let mut after: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            before.sort();
            after.sort();
            assert_eq!(before, after);
        }
        assert!(augment8(&t, 8).is_err());
    }

    #[test]
    fn degrade_dir_is_idempotent_and_reports_skips() {
        let root = tempfile::tempdir().unwrap();
        let m = synthesize_dataset(root.path(), 3, 32, 1).unwrap();
        assert_eq!(m.pairs.len(), 3);
        assert!(m.pairs.iter().all(|p| p.lr_size == [8, 8]));
        save_png(&Tensor::zeros(Shape::new(1, 3, 10, 12)), root.path().join("HR/odd.png")).unwrap();
        let lr = root.path().join("LR");
        let first = degrade_dir(root.path().join("HR"), &lr).unwrap();
        let bytes = fs::read(lr.join("0000.png")).unwrap();
        let second = degrade_dir(root.path().join("HR"), &lr).unwrap();
        assert_eq!(first, second);
        assert_eq!(bytes, fs::read(lr.join("0000.png")).unwrap());
        assert_eq!(first.skipped.len(), 1);
        assert_eq!(first.skipped[0].file, "odd.png");
    }
}
