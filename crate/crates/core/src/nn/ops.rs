//! Single-sample kernels: convolution via im2col + GEMM, and their adjoints.

/// Geometry of a strided, zero-padded square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    /// Geometry of a convolution reading a `channels × height × width` map.
    /// `None` when the kernel does not fit.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        let span_h = height + 2 * padding;
        let span_w = width + 2 * padding;
        if kernel == 0 || stride == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(ConvGeometry {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_height: (span_h - kernel) / stride + 1,
            out_width: (span_w - kernel) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_len(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// Unfolds `input` (`channels × height × width`) into a
/// `(channels·k·k) × (out_h·out_w)` matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let p = g.col_len();
    let mut cols = vec![0.0; g.col_rows() * p];
    let (k, s, pad) = (g.kernel as isize, g.stride as isize, g.padding as isize);
    let (h, w) = (g.height as isize, g.width as isize);
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c as isize * k + ky) * k + kx) as usize;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_height {
                    let iy = oy as isize * s - pad + ky;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let src_row = &plane[(iy * w) as usize..((iy + 1) * w) as usize];
                    let dst_row = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = ox as isize * s - pad + kx;
                        if ix >= 0 && ix < w {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let p = g.col_len();
    let mut out = vec![0.0; g.channels * g.height * g.width];
    let (k, s, pad) = (g.kernel as isize, g.stride as isize, g.padding as isize);
    let (h, w) = (g.height as isize, g.width as isize);
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c as isize * k + ky) * k + kx) as usize;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_height {
                    let iy = oy as isize * s - pad + ky;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let base = (iy * w) as usize;
                    for ox in 0..g.out_width {
                        let ix = ox as isize * s - pad + kx;
                        if ix >= 0 && ix < w {
                            plane[base + ix as usize] += src[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-major matrix with explicit strides, for [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }
}

/// `c = a·b + beta·c` for an `m × k` `a`, `k × n` `b` and row-major `m × n` `c`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    let a_extent = (m - 1) * a.row_stride + (k - 1) * a.col_stride;
    let b_extent = (k - 1) * b.row_stride + (n - 1) * b.col_stride;
    assert!(a_extent < a.data.len() && b_extent < b.data.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
