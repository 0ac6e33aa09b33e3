use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

pub const MIN_RESIZE_TARGET: usize = 8;

/// Bilinear resize to a `target × target` square.
pub fn resize(image: &ImageTensor, target: usize) -> Result<ImageTensor> {
    if target < MIN_RESIZE_TARGET {
        return Err(Error::Config(format!(
            "resize target {target} below minimum {MIN_RESIZE_TARGET}"
        )));
    }
    resize_to(image, target, target)
}

/// Half-pixel-centred source coordinate: taps and interpolation weight.
fn taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear resize to an arbitrary `height × width`; same size is a copy.
pub fn resize_to(image: &ImageTensor, height: usize, width: usize) -> Result<ImageTensor> {
    if height == 0 || width == 0 {
        return Err(Error::Config("resize target must be non-empty".into()));
    }
    if height == image.height() && width == image.width() {
        return Ok(image.clone());
    }
    let rows: Vec<_> = (0..height).map(|y| taps(y, image.height(), height)).collect();
    let cols: Vec<_> = (0..width).map(|x| taps(x, image.width(), width)).collect();
    let src_w = image.width();
    let mut data = Vec::with_capacity(height * width * image.channels());
    for c in 0..image.channels() {
        let plane = image.plane(c);
        for &(y0, y1, ty) in &rows {
            for &(x0, x1, tx) in &cols {
                let top = lerp(plane[y0 * src_w + x0], plane[y0 * src_w + x1], tx);
                let bottom = lerp(plane[y1 * src_w + x0], plane[y1 * src_w + x1], tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    ImageTensor::new(height, width, image.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let img = ImageTensor::from_fn(9, 9, 3, |y, x, c| ((y * 31 + x * 7 + c) as f64).sin()).unwrap();
        assert_eq!(resize(&img, 9).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageTensor::filled(10, 10, 1, 0.3).unwrap();
        for t in [8, 13, 27] {
            assert!(resize(&img, t).unwrap().data().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn small_target_rejected() {
        let img = ImageTensor::zeros(16, 16, 1).unwrap();
        assert!(matches!(resize(&img, 7), Err(Error::Config(_))));
    }
}
