//! Convolution kernels over `C×N×H×W` activations via im2col / col2im.

use crate::scalar::Scalar;

/// Geometry of one sliding-window pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

pub fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Unfold `img` (`C×N×H×W`) into a `(C·k·k) × (N·oh·ow)` column matrix.
pub fn im2col<T: Scalar>(img: &[T], g: &Window) -> Vec<T> {
    let Window { c, n, h, w, k, stride, pad, oh, ow } = *g;
    let cols = g.cols();
    let mut col = vec![T::zero(); g.rows() * cols];
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst_row = &mut col[row * cols..(row + 1) * cols];
                for b in 0..n {
                    let src = &img[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut dst_row[(b * oh + oy) * ow..(b * oh + oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add columns back into a `C×N×H×W` image.
pub fn col2im<T: Scalar>(col: &[T], g: &Window) -> Vec<T> {
    let Window { c, n, h, w, k, stride, pad, oh, ow } = *g;
    let cols = g.cols();
    let mut img = vec![T::zero(); c * n * h * w];
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src_row = &col[row * cols..(row + 1) * cols];
                for b in 0..n {
                    let dst = &mut img[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let src = &src_row[(b * oh + oy) * ow..(b * oh + oy + 1) * ow];
                        for (ox, v) in src.iter().enumerate() {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] = dst_row[ix as usize] + *v;
                            }
                        }
                    }
                }
            }
        }
    }
    img
}
