//! Dataset ingestion, the synthetic artifact generator, and image transforms.

mod manipulate;
mod resize;
mod synth;

pub use manipulate::{manipulate, rgb_to_hsv, hsv_to_rgb, ManipulationKind, ManipulationSpec};
pub use resize::{resize, resize_to, MIN_RESIZE_TARGET};
pub use synth::{synthesize_toy_dataset, synthesize_toy_dataset_with_channels, ArtifactFamily, SyntheticArtifactSpec};

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::classifier::{check_label, FAKE, REAL};
use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: ImageTensor,
    pub label: u8,
    pub source_tag: String,
}

impl LabeledImage {
    pub fn new(image: ImageTensor, label: u8, source_tag: impl Into<String>) -> Result<Self> {
        check_label(label)?;
        Ok(Self { image, label, source_tag: source_tag.into() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub real: usize,
    pub fake: usize,
}

pub fn class_counts(samples: &[LabeledImage]) -> ClassCounts {
    let real = samples.iter().filter(|s| s.label == REAL).count();
    ClassCounts { real, fake: samples.len() - real }
}

/// Errors unless both classes are present.
pub fn require_both_classes(samples: &[LabeledImage]) -> Result<ClassCounts> {
    let counts = class_counts(samples);
    if counts.real == 0 || counts.fake == 0 {
        return Err(Error::InvalidDataset(format!(
            "need both classes, got {} real and {} fake",
            counts.real, counts.fake
        )));
    }
    Ok(counts)
}

pub fn byte_to_unit(v: u8) -> f64 {
    f64::from(v) / 127.5 - 1.0
}

pub fn unit_to_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Converts a decoded image to a tensor with `channels` planes.
/// Gray inputs are replicated when three channels are wanted; colour inputs
/// are reduced to luma when one is wanted.
pub fn tensor_from_dynamic(img: &DynamicImage, channels: usize) -> Result<ImageTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match channels {
        1 => {
            let gray = img.to_luma8();
            let data = gray.as_raw().iter().map(|&v| byte_to_unit(v)).collect();
            ImageTensor::new(h, w, 1, data)
        }
        3 => {
            let rgb = img.to_rgb8();
            let raw = rgb.as_raw();
            let plane = h * w;
            let mut data = vec![0.0; 3 * plane];
            for i in 0..plane {
                for c in 0..3 {
                    data[c * plane + i] = byte_to_unit(raw[3 * i + c]);
                }
            }
            ImageTensor::new(h, w, 3, data)
        }
        other => Err(Error::Config(format!("unsupported channel count {other}"))),
    }
}

pub fn tensor_to_dynamic(image: &ImageTensor) -> DynamicImage {
    let (h, w) = (image.height() as u32, image.width() as u32);
    if image.channels() == 1 {
        let raw = image.data().iter().map(|&v| unit_to_byte(v)).collect();
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("buffer matches shape"))
    } else {
        let plane = image.shape().plane_len();
        let mut raw = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                raw.push(unit_to_byte(image.plane(c)[i]));
            }
        }
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("buffer matches shape"))
    }
}

pub fn read_image(path: &Path, channels: usize) -> Result<ImageTensor> {
    let img = image::open(path)?;
    tensor_from_dynamic(&img, channels)
}

/// Writes an 8-bit image; the format follows the extension (`png` or `ppm`).
pub fn write_image(path: &Path, image: &ImageTensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let dynamic = tensor_to_dynamic(image);
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        // PPM is always three-channel.
        DynamicImage::ImageRgb8(dynamic.to_rgb8()).save(path)?;
    } else {
        dynamic.save(path)?;
    }
    Ok(())
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
}

fn class_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Layout(format!("missing subfolder {}", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    files.retain(|p| is_image_file(p));
    files.sort();
    Ok(files)
}

/// Loads `root/real` and `root/fake`, reals first, each in lexicographic
/// file order. Images are resized to `image_size` squares when given.
pub fn load_dataset(root: &Path, image_size: Option<usize>, channels: usize) -> Result<Vec<LabeledImage>> {
    let mut out = Vec::new();
    for (folder, label) in [("real", REAL), ("fake", FAKE)] {
        let dir = root.join(folder);
        let files = class_files(&dir)?;
        let before = out.len();
        for path in files {
            let image = match read_image(&path, channels) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    continue;
                }
            };
            let image = match image_size {
                Some(s) if s != image.height() || s != image.width() => resize_to(&image, s, s)?,
                _ => image,
            };
            out.push(LabeledImage { image, label, source_tag: folder.to_string() });
        }
        if out.len() == before {
            return Err(Error::InvalidDataset(format!("no decodable images in {}", dir.display())));
        }
    }
    Ok(out)
}

/// Writes samples under `root/{real,fake}/NNNNN.png`, numbered per class.
pub fn write_dataset(root: &Path, samples: &[LabeledImage]) -> Result<Vec<PathBuf>> {
    let mut counters = [0usize; 2];
    let mut paths = Vec::with_capacity(samples.len());
    for s in samples {
        let folder = if s.label == REAL { "real" } else { "fake" };
        let idx = &mut counters[s.label as usize];
        let path = root.join(folder).join(format!("{:05}.png", *idx));
        *idx += 1;
        write_image(&path, &s.image)?;
        paths.push(path);
    }
    Ok(paths)
}
