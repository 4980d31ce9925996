//! Scalar abstraction and small slice math shared by the model modules.
//!
//! Training runs in `f32`; gradient verification runs the identical code in
//! `f64` against central finite differences.

use std::fmt::{Debug, Display};

pub trait Real:
    num_traits::Float + num_traits::NumAssign + Send + Sync + Debug + Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}

/// Dot product with four independent accumulator lanes. The summation
/// order is fixed by the code, so results are bitwise reproducible while
/// the compiler is free to vectorize the independent lanes.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (ca, cb) = (&a[i * 4..i * 4 + 4], &b[i * 4..i * 4 + 4]);
        lanes[0] += ca[0] * cb[0];
        lanes[1] += ca[1] * cb[1];
        lanes[2] += ca[2] * cb[2];
        lanes[3] += ca[3] * cb[3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    ((lanes[0] + lanes[2]) + (lanes[1] + lanes[3])) + tail
}

/// `out += s * a`
#[inline]
pub fn axpy<T: Real>(out: &mut [T], s: T, a: &[T]) {
    debug_assert_eq!(out.len(), a.len());
    for (o, x) in out.iter_mut().zip(a) {
        *o += s * *x;
    }
}

#[inline]
pub fn add_assign<T: Real>(out: &mut [T], a: &[T]) {
    debug_assert_eq!(out.len(), a.len());
    for (o, x) in out.iter_mut().zip(a) {
        *o += *x;
    }
}

pub fn l2_norm<T: Real>(a: &[T]) -> f64 {
    let mut s = 0.0f64;
    for x in a {
        let v = x.into_f64();
        s += v * v;
    }
    s.sqrt()
}

pub fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s += d * d;
    }
    s.sqrt()
}

/// In-place softmax over the whole slice.
pub fn softmax_in_place<T: Real>(v: &mut [T]) {
    let mut m = T::neg_infinity();
    for x in v.iter() {
        if *x > m {
            m = *x;
        }
    }
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Backward of `p = softmax(z)`: given dL/dp, return dL/dz in place.
pub fn softmax_backward_in_place<T: Real>(p: &[T], dp: &mut [T]) {
    debug_assert_eq!(p.len(), dp.len());
    let mut inner = T::zero();
    for (pi, di) in p.iter().zip(dp.iter()) {
        inner += *pi * *di;
    }
    for (pi, di) in p.iter().zip(dp.iter_mut()) {
        *di = *pi * (*di - inner);
    }
}

/// Relative error used by the finite-difference harness. The floor keeps
/// quantization noise on near-zero gradients from dominating the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = (analytic.abs() + numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}
