use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Photometric and geometric transforms used by the robustness suite.
///
/// Units: hue in turns, brightness as an offset in `[-1, 1]` pixel space,
/// saturation/contrast/gamma as factors, blur as a Gaussian sigma in pixels,
/// rotation in degrees (counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManipulationKind {
    Hue,
    Brightness,
    Saturation,
    Gamma,
    Contrast,
    Blur,
    Rotation,
}

impl ManipulationKind {
    pub const ALL: [ManipulationKind; 7] = [
        ManipulationKind::Hue,
        ManipulationKind::Brightness,
        ManipulationKind::Saturation,
        ManipulationKind::Gamma,
        ManipulationKind::Contrast,
        ManipulationKind::Blur,
        ManipulationKind::Rotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ManipulationKind::Hue => "hue",
            ManipulationKind::Brightness => "brightness",
            ManipulationKind::Saturation => "saturation",
            ManipulationKind::Gamma => "gamma",
            ManipulationKind::Contrast => "contrast",
            ManipulationKind::Blur => "blur",
            ManipulationKind::Rotation => "rotation",
        }
    }

    pub fn legal_range(self) -> (f64, f64) {
        match self {
            ManipulationKind::Hue | ManipulationKind::Brightness => (-0.5, 0.5),
            ManipulationKind::Saturation | ManipulationKind::Contrast => (0.0, 2.0),
            ManipulationKind::Gamma => (0.25, 4.0),
            ManipulationKind::Blur => (0.0, 4.0),
            ManipulationKind::Rotation => (-360.0, 360.0),
        }
    }

    pub fn identity_magnitude(self) -> f64 {
        match self {
            ManipulationKind::Saturation | ManipulationKind::Contrast | ManipulationKind::Gamma => 1.0,
            _ => 0.0,
        }
    }

    pub fn default_magnitude(self) -> f64 {
        match self {
            ManipulationKind::Hue => 0.1,
            ManipulationKind::Brightness => 0.2,
            ManipulationKind::Saturation | ManipulationKind::Gamma | ManipulationKind::Contrast => 1.5,
            ManipulationKind::Blur => 1.0,
            ManipulationKind::Rotation => 25.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulationSpec {
    pub kind: ManipulationKind,
    pub magnitude: f64,
}

impl ManipulationSpec {
    pub fn new(kind: ManipulationKind, magnitude: f64) -> Result<Self> {
        let spec = Self { kind, magnitude };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_for(kind: ManipulationKind) -> Self {
        Self { kind, magnitude: kind.default_magnitude() }
    }

    pub fn identity(kind: ManipulationKind) -> Self {
        Self { kind, magnitude: kind.identity_magnitude() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kind.legal_range();
        if !self.magnitude.is_finite() || self.magnitude < lo || self.magnitude > hi {
            return Err(Error::Config(format!(
                "{} magnitude {} outside [{lo}, {hi}]",
                self.kind.name(),
                self.magnitude
            )));
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        if self.kind == ManipulationKind::Rotation {
            return self.magnitude.rem_euclid(360.0) == 0.0;
        }
        self.magnitude == self.kind.identity_magnitude()
    }
}

pub fn manipulate(image: &ImageTensor, spec: &ManipulationSpec) -> Result<ImageTensor> {
    spec.validate()?;
    if spec.is_identity() {
        return Ok(image.clone());
    }
    let m = spec.magnitude;
    let out = match spec.kind {
        ManipulationKind::Hue => per_pixel_hsv(image, |h, s, v| ((h + m).rem_euclid(1.0), s, v)),
        ManipulationKind::Saturation => per_pixel_hsv(image, |h, s, v| (h, (s * m).min(1.0), v)),
        ManipulationKind::Brightness => image.map(|v| v + m)?,
        ManipulationKind::Gamma => image.map(|v| 2.0 * to_unit(v).powf(m) - 1.0)?,
        ManipulationKind::Contrast => {
            let mean = crate::reduce::pairwise_sum(image.data()) / image.data().len() as f64;
            image.map(|v| mean + m * (v - mean))?
        }
        ManipulationKind::Blur => gaussian_blur(image, m)?,
        ManipulationKind::Rotation => rotate(image, m)?,
    };
    out.map(|v| v.clamp(-1.0, 1.0))
}

fn to_unit(v: f64) -> f64 {
    ((v + 1.0) * 0.5).clamp(0.0, 1.0)
}

/// RGB in `[0,1]` to (hue in turns `[0,1)`, saturation, value).
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Applies `f` in HSV space. Single-channel images pass through untouched.
fn per_pixel_hsv(image: &ImageTensor, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> ImageTensor {
    if image.channels() != 3 {
        return image.clone();
    }
    let mut out = image.clone();
    let n = image.shape().plane_len();
    let data = out.data_mut();
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv(to_unit(data[i]), to_unit(data[n + i]), to_unit(data[2 * n + i]));
        let (h, s, v) = f(h, s, v);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        data[i] = 2.0 * r - 1.0;
        data[n + i] = 2.0 * g - 1.0;
        data[2 * n + i] = 2.0 * b - 1.0;
    }
    out
}

/// Reflect-101 index (`d c b | a b c d | c b a`) for any offset.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn gaussian_blur(image: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = (image.height(), image.width());
    let mut out = image.clone();
    let mut tmp = vec![0.0; h * w];
    for c in 0..image.channels() {
        let src = image.plane(c);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * src[y * w + reflect(x as isize + k as isize - radius, w)])
                    .sum();
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[reflect(y as isize + k as isize - radius, h) * w + x])
                    .sum();
            }
        }
    }
    Ok(out)
}

fn quarter_turns(image: &ImageTensor, turns: usize) -> Result<ImageTensor> {
    let (h, w) = (image.height(), image.width());
    let (oh, ow) = if turns % 2 == 1 { (w, h) } else { (h, w) };
    ImageTensor::from_fn(oh, ow, image.channels(), |y, x, c| match turns {
        1 => image.get(x, w - 1 - y, c),
        2 => image.get(h - 1 - y, w - 1 - x, c),
        _ => image.get(h - 1 - x, y, c),
    })
}

fn rotate(image: &ImageTensor, degrees: f64) -> Result<ImageTensor> {
    let norm = degrees.rem_euclid(360.0);
    for turns in 1..4 {
        if norm == 90.0 * turns as f64 {
            return quarter_turns(image, turns);
        }
    }
    let (h, w) = (image.height(), image.width());
    let (sin, cos) = norm.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    ImageTensor::from_fn(h, w, image.channels(), |y, x, c| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        let sx = cx + cos * dx - sin * dy;
        let sy = cy + sin * dx + cos * dy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (tx, ty) = (sx - x0, sy - y0);
        let at = |yy: f64, xx: f64| image.get(reflect(yy as isize, h), reflect(xx as isize, w), c);
        let top = at(y0, x0) + tx * (at(y0, x0 + 1.0) - at(y0, x0));
        let bottom = at(y0 + 1.0, x0) + tx * (at(y0 + 1.0, x0 + 1.0) - at(y0 + 1.0, x0));
        top + ty * (bottom - top)
    })
}
