//! Flat parameter storage with a named-tensor manifest.
//!
//! All trainable tensors live in one contiguous vector. Structured layouts
//! (encoder, Q estimators, intent head) hold ranges into it. The flat view
//! is what the optimizer, gradient checker and checkpoint writer see; the
//! ranges are what the forward/backward code sees.

use std::ops::Range;

use crate::math::Real;
use crate::rng::{fnv1a, stream};
use rand_distr::{Distribution, Normal};

/// How a tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// Zero-mean normal with standard deviation `1/sqrt(fan_in)`.
    NormalScaled(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: InitKind,
}

impl TensorMeta {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    tensors: Vec<TensorMeta>,
    cursor: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: &[usize], init: InitKind) -> Range<usize> {
        let len: usize = shape.iter().product();
        let meta = TensorMeta {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.cursor,
            init,
        };
        self.cursor += len;
        self.tensors.push(meta);
        self.cursor - len..self.cursor
    }

    pub fn finish(self) -> (Vec<TensorMeta>, usize) {
        (self.tensors, self.cursor)
    }
}

/// Materialize a parameter vector from the manifest. Each tensor gets its
/// own stream derived from (seed, tensor name), so two tensors with
/// different names are independently initialized and the layout order does
/// not matter.
pub fn init_params<T: Real>(metas: &[TensorMeta], total: usize, seed: u64) -> Vec<T> {
    let mut params = vec![T::zero(); total];
    for meta in metas {
        let dst = &mut params[meta.range()];
        match meta.init {
            InitKind::Zeros => {}
            InitKind::Ones => dst.fill(T::one()),
            InitKind::NormalScaled(fan_in) => {
                let std = 1.0 / (fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("valid std");
                let mut rng = stream(seed, "init", &[fnv1a(meta.name.as_bytes())]);
                for x in dst.iter_mut() {
                    *x = T::from_f64(normal.sample(&mut rng));
                }
            }
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_contiguous() {
        let mut lb = LayoutBuilder::new();
        let a = lb.push("a", &[2, 3], InitKind::Zeros);
        let b = lb.push("b", &[4], InitKind::Ones);
        let (metas, total) = lb.finish();
        assert_eq!(a, 0..6);
        assert_eq!(b, 6..10);
        assert_eq!(total, 10);
        assert_eq!(metas[1].name, "b");
    }

    #[test]
    fn init_is_deterministic_and_name_keyed() {
        let mut lb = LayoutBuilder::new();
        lb.push("w", &[16], InitKind::NormalScaled(16));
        lb.push("v", &[16], InitKind::NormalScaled(16));
        let (metas, total) = lb.finish();
        let p1: Vec<f64> = init_params(&metas, total, 9);
        let p2: Vec<f64> = init_params(&metas, total, 9);
        assert_eq!(p1, p2);
        assert_ne!(&p1[0..16], &p1[16..32]);
    }
}
