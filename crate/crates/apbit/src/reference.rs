//! Scalar integer reference kernels.
//!
//! These are the independent oracles the packed kernels are verified
//! against, and they double as the stand-in for native int4/int8 matrix
//! units when the precision switch decides emulation is not worth it.
//! They must stay plain triple/seven-loop integer code: no bit packing,
//! no tiling, no sharing with the emulated path.

use crate::bitplane::IntTensor;
use crate::error::{Error, Result};

/// Naive GEMM over decoded values: `y[i][j] = sum_k w[i][k] * x[j][k]`.
///
/// Both operands are row-major with the reduction along their second
/// dimension (the feature matrix is stored pre-transposed, N x K).
pub fn reference_gemm(w: &IntTensor, x: &IntTensor) -> Result<IntTensor> {
    let (m, k) = dims2(w)?;
    let (n, k2) = dims2(x)?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            expected: format!("inner dim {k}"),
            got: format!("{k2}"),
        });
    }
    let wv = w.values();
    let xv = x.values();
    let mut y = vec![0i32; m * n];
    for i in 0..m {
        let wrow = &wv[i * k..(i + 1) * k];
        for j in 0..n {
            let xrow = &xv[j * k..(j + 1) * k];
            let mut acc = 0i32;
            for kk in 0..k {
                acc += wrow[kk] * xrow[kk];
            }
            y[i * n + j] = acc;
        }
    }
    IntTensor::new(vec![m, n], y)
}

/// Conv geometry shared by the reference and the packed kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub height: usize,
    pub width: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0
            || self.c_in == 0
            || self.height == 0
            || self.width == 0
            || self.c_out == 0
            || self.kernel == 0
            || self.stride == 0
        {
            return Err(Error::ShapeMismatch {
                expected: "positive conv extents".into(),
                got: format!("{self:?}"),
            });
        }
        if self.height + 2 * self.pad < self.kernel || self.width + 2 * self.pad < self.kernel {
            return Err(Error::ShapeMismatch {
                expected: "kernel fits padded input".into(),
                got: format!("{self:?}"),
            });
        }
        Ok(())
    }
}

/// Naive direct convolution over decoded values.
///
/// `x` is NHWC `[batch, height, width, c_in]`, `w` is `[c_out, kernel,
/// kernel, c_in]`, output is NHWC `[batch, out_h, out_w, c_out]`.
/// Out-of-frame taps contribute zero regardless of encoding: this is the
/// value-domain semantics every padding strategy must reproduce.
pub fn reference_conv(x: &IntTensor, w: &IntTensor, g: &ConvGeometry) -> Result<IntTensor> {
    g.validate()?;
    let xd = [g.batch, g.height, g.width, g.c_in];
    if x.dims() != xd {
        return Err(Error::ShapeMismatch {
            expected: format!("{xd:?}"),
            got: format!("{:?}", x.dims()),
        });
    }
    let wd = [g.c_out, g.kernel, g.kernel, g.c_in];
    if w.dims() != wd {
        return Err(Error::ShapeMismatch {
            expected: format!("{wd:?}"),
            got: format!("{:?}", w.dims()),
        });
    }
    let (oh, ow) = (g.out_height(), g.out_width());
    let xv = x.values();
    let wv = w.values();
    let mut y = vec![0i32; g.batch * oh * ow * g.c_out];
    for b in 0..g.batch {
        for yh in 0..oh {
            for yw in 0..ow {
                for oc in 0..g.c_out {
                    let mut acc = 0i32;
                    for kh in 0..g.kernel {
                        for kw in 0..g.kernel {
                            let ih = (yh * g.stride + kh) as isize - g.pad as isize;
                            let iw = (yw * g.stride + kw) as isize - g.pad as isize;
                            if ih < 0
                                || iw < 0
                                || ih >= g.height as isize
                                || iw >= g.width as isize
                            {
                                continue;
                            }
                            let xoff =
                                ((b * g.height + ih as usize) * g.width + iw as usize) * g.c_in;
                            let woff = ((oc * g.kernel + kh) * g.kernel + kw) * g.c_in;
                            for c in 0..g.c_in {
                                acc += wv[woff + c] * xv[xoff + c];
                            }
                        }
                    }
                    y[((b * oh + yh) * ow + yw) * g.c_out + oc] = acc;
                }
            }
        }
    }
    IntTensor::new(vec![g.batch, oh, ow, g.c_out], y)
}

fn dims2(t: &IntTensor) -> Result<(usize, usize)> {
    match t.dims() {
        [a, b] => Ok((*a, *b)),
        other => Err(Error::ShapeMismatch {
            expected: "rank-2 tensor".into(),
            got: format!("{other:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_small_known() {
        let w = IntTensor::from_rows(&[vec![1, 2], vec![3, 4]]);
        let x = IntTensor::from_rows(&[vec![5, 6], vec![7, 8]]);
        // y[i][j] = dot(w_i, x_j)
        let y = reference_gemm(&w, &x).unwrap();
        assert_eq!(y.values(), &[17, 23, 39, 53]);
    }

    #[test]
    fn conv_identity_kernel() {
        let g = ConvGeometry {
            batch: 1,
            c_in: 1,
            height: 2,
            width: 2,
            c_out: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        };
        let x = IntTensor::new(vec![1, 2, 2, 1], vec![1, 2, 3, 4]).unwrap();
        let w = IntTensor::new(vec![1, 1, 1, 1], vec![1]).unwrap();
        assert_eq!(reference_conv(&x, &w, &g).unwrap().values(), &[1, 2, 3, 4]);
    }

    #[test]
    fn conv_padding_contributes_zero() {
        let g = ConvGeometry {
            batch: 1,
            c_in: 1,
            height: 1,
            width: 1,
            c_out: 1,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let x = IntTensor::new(vec![1, 1, 1, 1], vec![5]).unwrap();
        let w = IntTensor::new(vec![1, 3, 3, 1], vec![1; 9]).unwrap();
        // only the center tap is in frame
        assert_eq!(reference_conv(&x, &w, &g).unwrap().values(), &[5]);
    }
}
