//! Minimal differentiable network engine.
//!
//! There is no autodiff graph. Every layer kind has a hand-written backward
//! pass; [`Network`] strings them together and caches the activations it
//! needs between the forward and backward sweeps.

pub mod gradcheck;
mod kernels;
mod layer;
mod network;
mod tensor;

use core::fmt::Debug;
use core::iter::Sum;

use num_traits::Float;

pub use layer::{LayerSpec, Shape};
pub use network::{Gradients, LayerParams, Network, SampleGradients};
pub use tensor::Tensor;

/// Element type of tensors and networks: `f32` for training and attacks,
/// `f64` where gradients are checked numerically.
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C ← A·B + beta·C` on strided views; `a` is `m×k`, `b` is `k×n`,
    /// `c` is `m×n`, strides given as (row, column).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

fn extent(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    }
}

macro_rules! impl_gemm {
    ($t:ty, $f:path) => {
        fn gemm(
            m: usize,
            k: usize,
            n: usize,
            a: &[$t],
            a_strides: (isize, isize),
            b: &[$t],
            b_strides: (isize, isize),
            beta: $t,
            c: &mut [$t],
            c_strides: (isize, isize),
        ) {
            assert!(a.len() >= extent(m, k, a_strides));
            assert!(b.len() >= extent(k, n, b_strides));
            assert!(c.len() >= extent(m, n, c_strides));
            // SAFETY: the asserts above keep every strided access in bounds;
            // `c` is exclusively borrowed and cannot alias `a` or `b`.
            unsafe {
                $f(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    a_strides.0,
                    a_strides.1,
                    b.as_ptr(),
                    b_strides.0,
                    b_strides.1,
                    beta,
                    c.as_mut_ptr(),
                    c_strides.0,
                    c_strides.1,
                )
            }
        }
    };
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    impl_gemm!(f32, matrixmultiply::sgemm);
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    impl_gemm!(f64, matrixmultiply::dgemm);
}

/// Row-wise softmax of a `(rows, cols)` slice, in place.
pub fn softmax_rows<T: Scalar>(data: &mut [T], cols: usize) {
    for row in data.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Cross-entropy of one row of logits against `label`, via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    lse - logits[label]
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
