//! Orthonormal 2-D Fourier transforms and spectral-forensics diagnostics.
//!
//! Both directions are scaled by `1/sqrt(h*w)`, so the transform is unitary:
//! energy is preserved exactly and inverse(forward(x)) = x.

use std::cell::RefCell;
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::reduce::{canonical_mean, pairwise_sum};
use crate::tensor::{ImageTensor, Shape, Tensor3};

/// Offset added before logs in [`spectral_gap`].
pub const GAP_EPSILON: f64 = 1e-12;

/// Maximum imaginary residual tolerated when inverting a spectrum that came
/// from a real image.
const IMAG_RESIDUAL_LIMIT: f64 = 1e-4;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Real/imaginary parts of a per-channel 2-D DFT, stored as `2c` planes:
/// plane `2k` is the real part and plane `2k+1` the imaginary part of
/// source channel `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMap {
    planes: Tensor3,
    from_real: bool,
}

impl FrequencyMap {
    /// Builds a map from `2c` planes laid out as described on the type.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape("frequency map must be non-empty".into()));
        }
        if channels == 0 || !channels.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "frequency map needs an even, positive channel count, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} frequency map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite frequency coefficient".into()));
        }
        Ok(FrequencyMap {
            planes: Tensor3::from_data(channels, height, width, data),
            from_real: false,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.planes.height
    }

    pub fn width(&self) -> usize {
        self.planes.width
    }

    /// Number of planes (twice the source channel count).
    pub fn channels(&self) -> usize {
        self.planes.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.planes.data
    }

    /// Coefficient `(re, im)` of source channel `k` at frequency `(u, v)`.
    pub fn coefficient(&self, k: usize, u: usize, v: usize) -> (f64, f64) {
        let n = self.planes.plane_len();
        let i = u * self.planes.width + v;
        (
            self.planes.data[2 * k * n + i],
            self.planes.data[(2 * k + 1) * n + i],
        )
    }

    /// Sets a coefficient. The map no longer counts as the spectrum of a
    /// real image afterwards.
    pub fn set_coefficient(&mut self, k: usize, u: usize, v: usize, value: (f64, f64)) {
        let n = self.planes.plane_len();
        let i = u * self.planes.width + v;
        self.planes.data[2 * k * n + i] = value.0;
        self.planes.data[(2 * k + 1) * n + i] = value.1;
        self.from_real = false;
    }

    pub fn energy(&self) -> f64 {
        self.planes.data.iter().map(|v| v * v).sum()
    }

    pub fn as_tensor(&self) -> &Tensor3 {
        &self.planes
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.planes
    }
}

fn fft2_in_place(buf: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    let scale = 1.0 / ((height * width) as f64).sqrt();
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = if inverse {
            (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
        } else {
            (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
        };
        row_fft.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); height];
        for x in 0..width {
            for y in 0..height {
                column[y] = buf[y * width + x];
            }
            col_fft.process(&mut column);
            for y in 0..height {
                buf[y * width + x] = column[y] * scale;
            }
        }
    });
}

/// Forward transform of real planes into interleaved re/im planes.
pub(crate) fn forward_planes(input: &Tensor3) -> Tensor3 {
    let (c, h, w) = input.dims();
    let n = h * w;
    let mut out = Tensor3::zeros(2 * c, h, w);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..c {
        for (b, &v) in buf.iter_mut().zip(&input.data[k * n..(k + 1) * n]) {
            *b = Complex64::new(v, 0.0);
        }
        fft2_in_place(&mut buf, h, w, false);
        let (re, im) = out.data[2 * k * n..(2 * k + 2) * n].split_at_mut(n);
        for (i, z) in buf.iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
    }
    out
}

/// Inverse transform of interleaved re/im planes; keeps the real part and
/// reports the largest discarded imaginary magnitude.
pub(crate) fn inverse_planes(input: &Tensor3) -> (Tensor3, f64) {
    let (c2, h, w) = input.dims();
    let c = c2 / 2;
    let n = h * w;
    let mut out = Tensor3::zeros(c, h, w);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut residual = 0.0f64;
    for k in 0..c {
        let re = &input.data[2 * k * n..(2 * k + 1) * n];
        let im = &input.data[(2 * k + 1) * n..(2 * k + 2) * n];
        for i in 0..n {
            buf[i] = Complex64::new(re[i], im[i]);
        }
        fft2_in_place(&mut buf, h, w, true);
        for (o, z) in out.data[k * n..(k + 1) * n].iter_mut().zip(&buf) {
            *o = z.re;
            residual = residual.max(z.im.abs());
        }
    }
    (out, residual)
}

/// Orthonormal 2-D DFT of each image channel.
pub fn forward_fft(image: &ImageTensor) -> Result<FrequencyMap> {
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite pixel value".into()));
    }
    Ok(FrequencyMap {
        planes: forward_planes(&Tensor3::from(image)),
        from_real: true,
    })
}

/// Real part of the orthonormal inverse DFT of each channel pair.
///
/// The imaginary residual is discarded. For maps produced by
/// [`forward_fft`] it is checked (in debug builds) to be negligible.
pub fn inverse_fft(freq: &FrequencyMap) -> Result<ImageTensor> {
    let c2 = freq.channels();
    if !c2.is_multiple_of(2) {
        return Err(Error::Shape(format!("odd channel count {c2}")));
    }
    let (planes, residual) = inverse_planes(&freq.planes);
    debug_assert!(
        !freq.from_real || residual < IMAG_RESIDUAL_LIMIT,
        "imaginary residual {residual} on the spectrum of a real image"
    );
    let shape = Shape::new(planes.height, planes.width, planes.channels);
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Shape(format!(
            "inverse transform yields {} channels; images have 1 or 3",
            shape.channels
        )));
    }
    Ok(ImageTensor::from_parts_unchecked(shape, planes.data))
}

/// Signed offset of frequency index `u` from the centre of a DC-centred
/// (half-shifted) axis of length `n`.
pub fn centered_offset(u: usize, n: usize) -> i64 {
    ((u + n / 2) % n) as i64 - (n / 2) as i64
}

/// How per-cell power is collapsed into a radial bin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialMode {
    /// Per-bin mean power; comparable across resolutions.
    #[default]
    Mean,
    /// Per-bin total power (azimuthal integration).
    Integrate,
}

/// Azimuthally collapsed 1-D power spectrum over integer radii `0..=R`,
/// `R = floor(min(h, w) / 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub power: Vec<f64>,
    pub counts: Vec<usize>,
    pub mode: RadialMode,
}

impl RadialProfile {
    /// Largest radius `R`.
    pub fn max_radius(&self) -> usize {
        self.power.len() - 1
    }

    /// Total energy represented by the profile, independent of mode.
    pub fn total_energy(&self) -> f64 {
        match self.mode {
            RadialMode::Mean => self
                .power
                .iter()
                .zip(&self.counts)
                .map(|(p, &n)| p * n as f64)
                .sum(),
            RadialMode::Integrate => self.power.iter().sum(),
        }
    }

    /// Writes `radius,power` records preceded by a header line.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "radius,power")?;
        for (r, p) in self.power.iter().enumerate() {
            writeln!(out, "{r},{p}")?;
        }
        Ok(())
    }
}

/// Radial bin of every cell of an `h × w` spectrum. Cells farther than `R`
/// from the centre (the corners) fold into the last bin so that every cell
/// is counted exactly once.
pub fn radial_bins(height: usize, width: usize) -> (Vec<usize>, usize) {
    let max_r = height.min(width) / 2;
    let mut bins = Vec::with_capacity(height * width);
    for u in 0..height {
        let du = centered_offset(u, height) as f64;
        for v in 0..width {
            let dv = centered_offset(v, width) as f64;
            let r = (du * du + dv * dv).sqrt().round() as usize;
            bins.push(r.min(max_r));
        }
    }
    (bins, max_r)
}

/// Channel-averaged power `|X[u, v]|²` per cell.
fn cell_power(freq: &Tensor3) -> Vec<f64> {
    let n = freq.plane_len();
    let c = freq.channels / 2;
    let mut power = vec![0.0; n];
    for k in 0..c {
        let re = &freq.data[2 * k * n..(2 * k + 1) * n];
        let im = &freq.data[(2 * k + 1) * n..(2 * k + 2) * n];
        for i in 0..n {
            power[i] += re[i] * re[i] + im[i] * im[i];
        }
    }
    for p in &mut power {
        *p /= c as f64;
    }
    power
}

/// DC-centred radial power spectrum with per-bin mean power.
pub fn radial_power_spectrum(image: &ImageTensor) -> RadialProfile {
    radial_power_spectrum_with(image, RadialMode::Mean)
}

pub fn radial_power_spectrum_with(image: &ImageTensor, mode: RadialMode) -> RadialProfile {
    let freq = forward_planes(&Tensor3::from(image));
    let power = cell_power(&freq);
    let (bins, max_r) = radial_bins(image.height(), image.width());
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); max_r + 1];
    for (p, &b) in power.iter().zip(&bins) {
        members[b].push(*p);
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let power = members
        .iter()
        .map(|m| {
            let total = pairwise_sum(m);
            match mode {
                RadialMode::Mean if !m.is_empty() => total / m.len() as f64,
                _ => total,
            }
        })
        .collect();
    RadialProfile {
        power,
        counts,
        mode,
    }
}

fn check_uniform(images: &[ImageTensor]) -> Result<Shape> {
    let first = images
        .first()
        .ok_or_else(|| Error::EmptyInput("no images".into()))?
        .shape();
    if let Some(other) = images.iter().find(|i| i.shape() != first) {
        return Err(Error::Shape(format!(
            "mixed image shapes {first} and {}",
            other.shape()
        )));
    }
    Ok(first)
}

/// Per-bin mean of the radial profiles of a dataset (order independent).
pub fn mean_radial_profile(images: &[ImageTensor], mode: RadialMode) -> Result<RadialProfile> {
    check_uniform(images)?;
    let profiles = parallel::map(images, |img| radial_power_spectrum_with(img, mode));
    let bins = profiles[0].power.len();
    let power = (0..bins)
        .map(|r| {
            let column: Vec<f64> = profiles.iter().map(|p| p.power[r]).collect();
            canonical_mean(&column)
        })
        .collect();
    Ok(RadialProfile {
        power,
        counts: profiles[0].counts.clone(),
        mode,
    })
}

/// Dataset-averaged, DC-centred log-magnitude spectrum `log(1 + |X|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanSpectrum2D {
    pub height: usize,
    pub width: usize,
    /// Row-major values; the DC term sits at `(h/2, w/2)`.
    pub values: Vec<f64>,
}

impl MeanSpectrum2D {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn write_grid(&self, out: impl Write) -> std::io::Result<()> {
        write_grid(out, self.height, self.width, &self.values)
    }
}

/// Centred log-magnitude spectrum of one image, averaged over channels.
pub fn log_magnitude_centered(image: &ImageTensor) -> Vec<f64> {
    let (h, w) = (image.height(), image.width());
    let freq = forward_planes(&Tensor3::from(image));
    let n = h * w;
    let c = image.channels();
    let mut out = vec![0.0; n];
    for u in 0..h {
        for v in 0..w {
            let i = u * w + v;
            let mut acc = 0.0;
            for k in 0..c {
                let re = freq.data[2 * k * n + i];
                let im = freq.data[(2 * k + 1) * n + i];
                acc += (re * re + im * im).sqrt().ln_1p();
            }
            let cu = (u + h / 2) % h;
            let cv = (v + w / 2) % w;
            out[cu * w + cv] = acc / c as f64;
        }
    }
    out
}

/// Per-cell mean of [`log_magnitude_centered`] over a dataset.
pub fn mean_spectrum_2d(images: &[ImageTensor]) -> Result<MeanSpectrum2D> {
    let shape = check_uniform(images)?;
    let spectra = parallel::map(images, log_magnitude_centered);
    let n = shape.plane_len();
    let values = (0..n)
        .map(|i| {
            let column: Vec<f64> = spectra.iter().map(|s| s[i]).collect();
            canonical_mean(&column)
        })
        .collect();
    Ok(MeanSpectrum2D {
        height: shape.height,
        width: shape.width,
        values,
    })
}

/// The top quarter of radii, `[3R/4, R]`.
pub fn top_quartile_band(max_radius: usize) -> RangeInclusive<usize> {
    (3 * max_radius) / 4..=max_radius
}

/// Mean absolute log-ratio of two profiles over a band of radii.
pub fn spectral_gap(a: &RadialProfile, b: &RadialProfile, band: RangeInclusive<usize>) -> Result<f64> {
    if a.power.len() != b.power.len() {
        return Err(Error::Shape(format!(
            "profiles have {} and {} bins",
            a.power.len(),
            b.power.len()
        )));
    }
    let max_r = a.max_radius();
    if band.is_empty() || *band.end() > max_r {
        return Err(Error::Range(format!(
            "band {}..={} outside 0..={max_r}",
            band.start(),
            band.end()
        )));
    }
    let terms: Vec<f64> = band
        .map(|r| ((a.power[r] + GAP_EPSILON).ln() - (b.power[r] + GAP_EPSILON).ln()).abs())
        .collect();
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Writes one float grid: an `h w` header line followed by `h` rows.
pub fn write_grid(mut out: impl Write, height: usize, width: usize, values: &[f64]) -> std::io::Result<()> {
    assert_eq!(values.len(), height * width);
    writeln!(out, "{height} {width}")?;
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Writes every channel of an image as consecutive grids.
pub fn write_image_grids(mut out: impl Write, image: &ImageTensor) -> std::io::Result<()> {
    for c in 0..image.channels() {
        write_grid(&mut out, image.height(), image.width(), image.plane(c))?;
    }
    Ok(())
}

/// Reads all grids from a stream written by [`write_grid`].
pub fn read_grids(input: impl BufRead) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let bad = |m: String| Error::InvalidInput(format!("grid file: {m}"));
    let mut grids = Vec::new();
    let mut lines = input.lines();
    while let Some(header) = lines.next() {
        let header = header.map_err(|e| bad(e.to_string()))?;
        if header.trim().is_empty() {
            continue;
        }
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [h, w] = dims[..] else {
            return Err(bad(format!("bad header {header:?}")));
        };
        let mut values = Vec::with_capacity(h * w);
        for _ in 0..h {
            let line = lines
                .next()
                .ok_or_else(|| bad("truncated grid".into()))?
                .map_err(|e| bad(e.to_string()))?;
            for t in line.split_whitespace() {
                values.push(t.parse::<f64>().map_err(|_| bad(format!("bad value {t:?}")))?);
            }
        }
        if values.len() != h * w {
            return Err(bad(format!("expected {} values, found {}", h * w, values.len())));
        }
        grids.push((h, w, values));
    }
    Ok(grids)
}
