//! Batched forward/backward kernels for each layer kind.

use alloc::vec;
use alloc::vec::Vec;
use core::iter::repeat;

use super::Scalar;

/// `y = x W + b` with `W` stored `(inputs, outputs)`.
pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    y: &mut [T],
    inputs: usize,
    outputs: usize,
) {
    let rows = x.len() / inputs;
    for yr in y.chunks_exact_mut(outputs) {
        yr.copy_from_slice(b);
    }
    let (i, o) = (inputs as isize, outputs as isize);
    T::gemm(rows, inputs, outputs, x, (i, 1), w, (o, 1), T::one(), y, (o, 1));
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    params: Option<(&mut [T], &mut [T])>,
    dx: Option<&mut [T]>,
    inputs: usize,
    outputs: usize,
) {
    let rows = x.len() / inputs;
    let (i, o) = (inputs as isize, outputs as isize);
    if let Some((dw, db)) = params {
        // dW += xᵀ dy
        T::gemm(inputs, rows, outputs, x, (1, i), dy, (o, 1), T::one(), dw, (o, 1));
        for dyr in dy.chunks_exact(outputs) {
            for (g, &d) in db.iter_mut().zip(dyr) {
                *g = *g + d;
            }
        }
    }
    if let Some(dx) = dx {
        // dx = dy Wᵀ
        T::gemm(rows, outputs, inputs, dy, (o, 1), w, (1, o), T::zero(), dx, (i, 1));
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeom {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn taps(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// For tap `(ky, kx)` and output row `y`: the source row and the output
    /// column range `[x0, x1)` that reads inside the image, plus the column
    /// shift between output and source.
    #[inline]
    fn window(&self, y: usize, ky: usize, kx: usize) -> Option<(usize, usize, usize, isize)> {
        let pad = (self.kernel / 2) as isize;
        let iy = y as isize + ky as isize - pad;
        if iy < 0 || iy as usize >= self.height {
            return None;
        }
        let shift = kx as isize - pad;
        let x0 = (-shift).max(0) as usize;
        let x1 = (self.width as isize - shift).clamp(0, self.width as isize) as usize;
        (x0 < x1).then_some((iy as usize, x0, x1, shift))
    }

    /// Unfolds a `(B, C, H, W)` batch into `(C·K·K, B·H·W)` patch columns.
    pub(crate) fn im2col<T: Scalar>(&self, x: &[T], rows: usize) -> Vec<T> {
        let (plane, k, w) = (self.plane(), self.kernel, self.width);
        let mut cols = Vec::with_capacity(self.taps() * rows * plane);
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    for b in 0..rows {
                        let src = &x[(b * self.in_channels + c) * plane..][..plane];
                        for y in 0..self.height {
                            match self.window(y, ky, kx) {
                                Some((iy, x0, x1, shift)) => {
                                    let s0 = (x0 as isize + shift) as usize;
                                    cols.extend(repeat(T::zero()).take(x0));
                                    cols.extend_from_slice(&src[iy * w + s0..][..x1 - x0]);
                                    cols.extend(repeat(T::zero()).take(w - x1));
                                }
                                None => cols.extend(repeat(T::zero()).take(w)),
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-adds patch columns back into
    /// a `(B, C, H, W)` gradient.
    fn col2im<T: Scalar>(&self, cols: &[T], rows: usize, dx: &mut [T]) {
        let (plane, k) = (self.plane(), self.kernel);
        let span = rows * plane;
        dx.iter_mut().for_each(|v| *v = T::zero());
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let src = &cols[r * span..(r + 1) * span];
                    for b in 0..rows {
                        let dst = &mut dx[(b * self.in_channels + c) * plane..][..plane];
                        for y in 0..self.height {
                            if let Some((iy, x0, x1, shift)) = self.window(y, ky, kx) {
                                let s0 = (x0 as isize + shift) as usize;
                                let o = b * plane + y * self.width;
                                for (d, &v) in dst[iy * self.width + s0..][..x1 - x0].iter_mut().zip(&src[o + x0..o + x1]) {
                                    *d = *d + v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `y = W * x + b` per sample, given the patch columns of `x`.
pub(crate) fn conv_forward<T: Scalar>(cols: &[T], w: &[T], b: &[T], y: &mut [T], g: ConvGeom) {
    let plane = g.plane();
    let rows = y.len() / (g.out_channels * plane);
    let span = rows * plane;
    let taps = g.taps();
    for (o, chunk) in y.chunks_exact_mut(plane).enumerate() {
        chunk.iter_mut().for_each(|v| *v = b[o % g.out_channels]);
    }
    let (t, sp, p) = (taps as isize, span as isize, plane as isize);
    for s in 0..rows {
        let yb = &mut y[s * g.out_channels * plane..][..g.out_channels * plane];
        T::gemm(g.out_channels, taps, plane, w, (t, 1), &cols[s * plane..], (sp, 1), T::one(), yb, (p, 1));
    }
}

pub(crate) fn conv_backward<T: Scalar>(
    cols: &[T],
    w: &[T],
    dy: &[T],
    params: Option<(&mut [T], &mut [T])>,
    dx: Option<&mut [T]>,
    g: ConvGeom,
) {
    let plane = g.plane();
    let block = g.out_channels * plane;
    let rows = dy.len() / block;
    let span = rows * plane;
    let taps = g.taps();
    let (t, sp, p) = (taps as isize, span as isize, plane as isize);
    if let Some((dw, db)) = params {
        for (o, d) in dy.chunks_exact(plane).enumerate() {
            let o = o % g.out_channels;
            db[o] = db[o] + d.iter().copied().sum::<T>();
        }
        // dW += dy · colsᵀ
        for s in 0..rows {
            let dyb = &dy[s * block..][..block];
            T::gemm(g.out_channels, plane, taps, dyb, (p, 1), &cols[s * plane..], (1, sp), T::one(), dw, (t, 1));
        }
    }
    if let Some(dx) = dx {
        // dcols = Wᵀ · dy
        let mut dcols = vec![T::zero(); taps * span];
        for s in 0..rows {
            let dyb = &dy[s * block..][..block];
            T::gemm(taps, g.out_channels, plane, w, (1, t), dyb, (p, 1), T::zero(), &mut dcols[s * plane..], (sp, 1));
        }
        g.col2im(&dcols, rows, dx);
    }
}

/// 2x2 max pooling; `arg` receives the flat input index of each maximum.
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &[T],
    y: &mut [T],
    arg: &mut [u32],
    planes: usize,
    height: usize,
    width: usize,
) {
    let (oh, ow) = (height / 2, width / 2);
    for p in 0..planes {
        let ib = p * height * width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ib + 2 * oy * width + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ib + (2 * oy + dy) * width + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                y[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
}

pub(crate) fn maxpool_backward<T: Scalar>(dy: &[T], arg: &[u32], dx: &mut [T]) {
    dx.iter_mut().for_each(|v| *v = T::zero());
    for (&d, &i) in dy.iter().zip(arg) {
        dx[i as usize] = dx[i as usize] + d;
    }
}

pub(crate) fn gap_forward<T: Scalar>(x: &[T], y: &mut [T], plane: usize) {
    let inv = T::one() / T::of(plane as f64);
    for (v, chunk) in y.iter_mut().zip(x.chunks_exact(plane)) {
        *v = chunk.iter().copied().sum::<T>() * inv;
    }
}

pub(crate) fn gap_backward<T: Scalar>(dy: &[T], dx: &mut [T], plane: usize) {
    let inv = T::one() / T::of(plane as f64);
    for (&d, chunk) in dy.iter().zip(dx.chunks_exact_mut(plane)) {
        chunk.iter_mut().for_each(|v| *v = d * inv);
    }
}

pub(crate) fn relu_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

pub(crate) fn relu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    dy.iter().zip(x).map(|(&d, &v)| if v > T::zero() { d } else { T::zero() }).collect()
}
