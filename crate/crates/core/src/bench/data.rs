//! Dataset loading, synthesis, and resolution reduction.

use std::collections::BTreeMap;
use std::f32::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// Labeled image stack in `[0,1]`, laid out `[N, C, H, W]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::shape(format!(
                "dataset images must be [N, C, H, W], got {:?}",
                images.shape()
            )));
        }
        let n = images.shape()[0];
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} images", labels.len())));
        }
        if n_classes == 0 {
            return Err(Error::contract("dataset needs a positive class count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::contract(format!("label {bad} outside {n_classes} classes")));
        }
        if !images.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::numeric("dataset pixels must lie in [0, 1]"));
        }
        Ok(Dataset { name: name.into(), images, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// (channels, height, width) of one image.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::contract("dataset subset needs at least one index"));
        }
        let (c, h, w) = self.dims();
        let sample_len = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * sample_len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!("index {i} outside dataset of {}", self.len())));
            }
            data.extend_from_slice(self.images.sample(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            name: self.name.clone(),
            images: Tensor::new(vec![indices.len(), c, h, w], data)?,
            labels,
            n_classes: self.n_classes,
        })
    }
}

const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Read every `*.bin` file in `dir` (sorted by name) as CIFAR-10 binary
/// batches: 3073-byte records of one label byte followed by 3072 pixel bytes,
/// channel-major R,G,B with each plane row-major 32×32. Pixels scale by
/// 1/255, so byte 255 maps to exactly 1.0.
pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(format!("no .bin batch files in {}", dir.display())));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in &files {
        let bytes = std::fs::read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::format(format!(
                "{}: {} bytes is not a positive multiple of {CIFAR_RECORD}",
                path.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label > 9 {
                return Err(Error::format(format!(
                    "{}: label byte {label} exceeds 9",
                    path.display()
                )));
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new("cifar10", Tensor::new(vec![n, 3, 32, 32], data)?, labels, 10)
}

/// Load a directory tree of binary PPM images, one subdirectory per class.
/// Labels follow sorted subdirectory order unless `class_map` assigns them
/// explicitly. All images must agree on dimensions; only `P6` with maxval
/// 255 is accepted.
pub fn load_ppm_dir(dir: &Path, class_map: Option<&BTreeMap<String, usize>>) -> Result<Dataset> {
    let mut subdirs: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::contract(format!("no class subdirectories in {}", dir.display())));
    }
    let n_classes = match class_map {
        Some(map) => map.values().max().map_or(0, |m| m + 1),
        None => subdirs.len(),
    };
    let mut dims: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (order, sub) in subdirs.iter().enumerate() {
        let dir_name = sub
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::format(format!("unreadable directory name under {}", dir.display())))?
            .to_string();
        let label = match class_map {
            Some(map) => *map.get(&dir_name).ok_or_else(|| {
                Error::config(format!("class map does not name directory {dir_name:?}"))
            })?,
            None => order,
        };
        let mut files: Vec<_> = std::fs::read_dir(sub)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
            .collect();
        files.sort();
        for path in &files {
            let bytes = std::fs::read(path)?;
            let (w, h, pixels) = parse_p6(&bytes)
                .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
            match dims {
                None => dims = Some((w, h)),
                Some(d) if d != (w, h) => {
                    return Err(Error::format(format!(
                        "{}: {w}x{h} differs from earlier {}x{}",
                        path.display(),
                        d.0,
                        d.1
                    )))
                }
                _ => {}
            }
            // interleaved RGB rows -> channel-major planes
            let plane = w * h;
            data.resize(data.len() + 3 * plane, 0.0);
            let base = data.len() - 3 * plane;
            for (i, px) in pixels.chunks_exact(3).enumerate() {
                for ch in 0..3 {
                    data[base + ch * plane + i] = px[ch] as f32 / 255.0;
                }
            }
            labels.push(label);
        }
    }
    let (w, h) = dims.ok_or_else(|| Error::contract("class subdirectories hold no .ppm files"))?;
    let n = labels.len();
    Dataset::new("ppm", Tensor::new(vec![n, 3, h, w], data)?, labels, n_classes)
}

/// Returns (width, height, interleaved RGB bytes). Errors are plain strings;
/// the caller prefixes the file path.
fn parse_p6(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut at = 0;
    let mut token = |bytes: &[u8]| -> std::result::Result<Vec<u8>, String> {
        // skip whitespace and '#' comments
        loop {
            match bytes.get(at) {
                Some(b) if b.is_ascii_whitespace() => at += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(at), None | Some(b'\n')) {
                        at += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(|b| !b.is_ascii_whitespace()) {
            at += 1;
        }
        Ok(bytes[start..at].to_vec())
    };
    if token(bytes)? != b"P6" {
        return Err("not a binary P6 file".into());
    }
    let mut int = |name: &str| -> std::result::Result<usize, String> {
        let t = token(bytes)?;
        std::str::from_utf8(&t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {name} field"))
    };
    let w = int("width")?;
    let h = int("height")?;
    let maxval = int("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported; expected 255"));
    }
    if w == 0 || h == 0 {
        return Err("zero image dimension".into());
    }
    at += 1; // single whitespace after maxval
    let need = 3 * w * h;
    let pixels = bytes.get(at..at + need).ok_or("truncated pixel data")?;
    Ok((w, h, pixels.to_vec()))
}

/// Resolutions the synthetic generator supports.
pub const SYNTH_RESOLUTIONS: [usize; 4] = [16, 32, 64, 128];

/// Class-conditional oriented textures: class k draws a grating at angle
/// k·π/n_classes whose spatial frequency alternates between 3 and 6 cycles
/// per image, with a per-sample phase wobble and pixel noise on top. The
/// signature survives resizing because frequency is expressed in cycles per
/// image, so the same classes exist at every supported resolution. Labels
/// cycle round-robin, giving balanced classes.
pub fn synth_dataset(
    resolution: usize,
    n_classes: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    if !SYNTH_RESOLUTIONS.contains(&resolution) {
        return Err(Error::contract(format!(
            "resolution {resolution} unsupported; pick one of {SYNTH_RESOLUTIONS:?}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::contract("need at least two classes"));
    }
    if n_samples == 0 {
        return Err(Error::contract("need at least one sample"));
    }
    let res = resolution;
    let plane = res * res;
    let mut data = Vec::with_capacity(n_samples * 3 * plane);
    let mut labels = Vec::with_capacity(n_samples);
    // fixed per-channel gain so the three channels stay correlated but not equal
    const GAIN: [f32; 3] = [1.0, 0.85, 0.7];
    // The grating amplitude sits deliberately well under the pixel-noise
    // floor: aggregated over the whole image the classes remain separable
    // (the matched-filter SNR at 32x32 is about 5 sigma), but per-pixel
    // margins are small enough that even a 1/255 budget can cross the learned
    // boundary for a fair share of samples, and 8/255 crosses it for
    // essentially all of them, mirroring the fragility of natural images.
    const AMPLITUDE: f32 = 0.012;
    const NOISE: f32 = 0.08;
    for i in 0..n_samples {
        let class = i % n_classes;
        let mut rng = stream_rng(seed, 0x6000_0000 + i as u64);
        let theta = PI * class as f32 / n_classes as f32;
        let cycles = if class % 2 == 0 { 3.0 } else { 6.0 };
        let phase: f32 = rng.gen_range(-0.4..0.4);
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let mut image = vec![0.0f32; 3 * plane];
        for y in 0..res {
            for x in 0..res {
                let u = (x as f32 + 0.5) / res as f32;
                let v = (y as f32 + 0.5) / res as f32;
                let carrier = (2.0 * PI * cycles * (u * cos_t + v * sin_t) + phase).cos();
                for ch in 0..3 {
                    let noise: f32 = rng.gen_range(-NOISE..NOISE);
                    let value = 0.5 + AMPLITUDE * GAIN[ch] * carrier + noise;
                    image[ch * plane + y * res + x] = value.clamp(0.02, 0.98);
                }
            }
        }
        data.extend_from_slice(&image);
        labels.push(class);
    }
    Dataset::new(
        format!("synth{res}"),
        Tensor::new(vec![n_samples, 3, res, res], data)?,
        labels,
        n_classes,
    )
}

/// Box-filter average pooling by an integer factor.
pub fn downsample(dataset: &Dataset, factor: usize) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::contract("downsample factor must be positive"));
    }
    let (c, h, w) = dataset.dims();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::contract(format!(
            "dimensions {h}x{w} are not divisible by factor {factor}"
        )));
    }
    if factor == 1 {
        return Ok(dataset.clone());
    }
    let (oh, ow) = (h / factor, w / factor);
    let n = dataset.len();
    let mut data = Vec::with_capacity(n * c * oh * ow);
    let norm = 1.0 / (factor * factor) as f32;
    for s in 0..n {
        let img = dataset.images.sample(s);
        for ch in 0..c {
            let plane = &img[ch * h * w..(ch + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = 0.0f32;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            sum += plane[(oy * factor + dy) * w + ox * factor + dx];
                        }
                    }
                    data.push(sum * norm);
                }
            }
        }
    }
    Dataset::new(
        format!("{}_ds{}", dataset.name, factor),
        Tensor::new(vec![n, c, oh, ow], data)?,
        dataset.labels.clone(),
        dataset.n_classes,
    )
}
