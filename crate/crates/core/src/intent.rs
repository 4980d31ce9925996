//! Intent representation learning: a three-layer fully connected head
//! predicting the target item embedding, trained with a triplet loss
//! against the true target and uniformly sampled negatives.

use std::ops::Range;

use rand::Rng;

use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::layout::{InitKind, LayoutBuilder};
use crate::math::{dot, euclidean, Real};

/// Three `d -> d` layers. ReLU follows the first two; the output layer is
/// linear by default so predictions can match embeddings with negative
/// coordinates. `strict_relu` restores ReLU on the output layer.
#[derive(Debug, Clone)]
pub struct IntentLayout {
    pub d: usize,
    pub w: [Range<usize>; 3],
    pub b: [Range<usize>; 3],
}

pub fn build_intent_layout(lb: &mut LayoutBuilder, d: usize) -> IntentLayout {
    let mk_w = |lb: &mut LayoutBuilder, i: usize| {
        lb.push(&format!("intent.fc{i}.w"), &[d, d], InitKind::NormalScaled(d))
    };
    let mk_b = |lb: &mut LayoutBuilder, i: usize| {
        lb.push(&format!("intent.fc{i}.b"), &[d], InitKind::Zeros)
    };
    let w = [mk_w(lb, 0), mk_w(lb, 1), mk_w(lb, 2)];
    let b = [mk_b(lb, 0), mk_b(lb, 1), mk_b(lb, 2)];
    IntentLayout { d, w, b }
}

/// Post-activation outputs of the three layers.
#[derive(Debug, Clone)]
pub struct IntentCache<T> {
    pub x: Vec<T>,
    pub a: [Vec<T>; 3],
    bw_g: Vec<T>,
    bw_g2: Vec<T>,
}

impl<T> Default for IntentCache<T> {
    fn default() -> Self {
        IntentCache {
            x: Vec::new(),
            a: [Vec::new(), Vec::new(), Vec::new()],
            bw_g: Vec::new(),
            bw_g2: Vec::new(),
        }
    }
}

impl<T: Real> IntentCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, d: usize) {
        let resize = |v: &mut Vec<T>, n: usize| {
            if v.len() != n {
                v.clear();
                v.resize(n, T::zero());
            }
        };
        resize(&mut self.x, d);
        for buf in self.a.iter_mut() {
            resize(buf, d);
        }
        resize(&mut self.bw_g, d);
        resize(&mut self.bw_g2, d);
    }
}

/// `out[o] = b[o] + sum_c w[o,c] x[c]` for a row-major `d x d` matrix.
fn dense_forward<T: Real>(w: &[T], b: &[T], x: &[T], out: &mut [T], d: usize) {
    for o in 0..d {
        out[o] = b[o] + dot(&w[o * d..(o + 1) * d], x);
    }
}

/// Predict the target item embedding from the sequence representation.
pub fn intent_forward<T: Real>(
    params: &[T],
    lay: &IntentLayout,
    seq_final: &[T],
    strict_relu: bool,
    cache: &mut IntentCache<T>,
) {
    let d = lay.d;
    cache.ensure(d);
    cache.x.copy_from_slice(seq_final);
    let IntentCache { x, a, .. } = cache;
    let (a0, rest) = a.split_at_mut(1);
    let (a1, a2) = rest.split_at_mut(1);
    let relu = |buf: &mut [T]| {
        for v in buf.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    };
    dense_forward(
        &params[lay.w[0].clone()],
        &params[lay.b[0].clone()],
        x,
        &mut a0[0],
        d,
    );
    relu(&mut a0[0]);
    dense_forward(
        &params[lay.w[1].clone()],
        &params[lay.b[1].clone()],
        &a0[0],
        &mut a1[0],
        d,
    );
    relu(&mut a1[0]);
    dense_forward(
        &params[lay.w[2].clone()],
        &params[lay.b[2].clone()],
        &a1[0],
        &mut a2[0],
        d,
    );
    if strict_relu {
        relu(&mut a2[0]);
    }
}

/// Backward through the head. `d_out` is dL/d(prediction); the gradient of
/// the input accumulates into `d_seq_final`.
pub fn intent_backward<T: Real>(
    params: &[T],
    lay: &IntentLayout,
    cache: &mut IntentCache<T>,
    strict_relu: bool,
    d_out: &[T],
    grads: &mut [T],
    d_seq_final: &mut [T],
) {
    let d = lay.d;
    let IntentCache { x, a, bw_g, bw_g2 } = cache;
    bw_g.copy_from_slice(d_out);
    for layer in (0..3).rev() {
        let relu = layer < 2 || strict_relu;
        if relu {
            for (g, v) in bw_g.iter_mut().zip(a[layer].iter()) {
                if *v <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        let input: &[T] = if layer == 0 { x } else { &a[layer - 1] };
        let w = &params[lay.w[layer].clone()];
        let w_off = lay.w[layer].start;
        let b_off = lay.b[layer].start;
        bw_g2.iter_mut().for_each(|v| *v = T::zero());
        for o in 0..d {
            let g = bw_g[o];
            grads[b_off + o] += g;
            if g == T::zero() {
                continue;
            }
            let row = &w[o * d..(o + 1) * d];
            let drow = &mut grads[w_off + o * d..w_off + (o + 1) * d];
            for c in 0..d {
                drow[c] += g * input[c];
                bw_g2[c] += g * row[c];
            }
        }
        std::mem::swap(bw_g, bw_g2);
    }
    for (acc, g) in d_seq_final.iter_mut().zip(bw_g.iter()) {
        *acc += *g;
    }
}

/// Sample `k` distinct negative item ids, uniform over the catalog minus
/// the history window, the target and the padding token.
pub fn sample_negatives<R: Rng>(
    catalog: &Catalog,
    history_items: &[u32],
    target_item: u32,
    k: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let n = catalog.num_items;
    let pad = catalog.padding_item_id();
    let mut excluded: Vec<u32> = history_items
        .iter()
        .copied()
        .filter(|&i| i != pad)
        .chain(std::iter::once(target_item))
        .collect();
    excluded.sort_unstable();
    excluded.dedup();
    let eligible = n as usize - excluded.len();
    if eligible < k {
        return Err(Error::Sampling(format!(
            "catalog too small: need {k} negatives, only {eligible} eligible items"
        )));
    }
    if eligible <= 2 * k {
        // Dense regime: enumerate the eligible ids and take a uniform
        // subset (handles the exhaustion case exactly).
        let mut pool: Vec<u32> = (0..n).filter(|i| excluded.binary_search(i).is_err()).collect();
        let picked = rand::seq::index::sample(rng, pool.len(), k);
        let mut out: Vec<u32> = picked.into_iter().map(|i| pool[i]).collect();
        // Keep output order deterministic regardless of sampler internals.
        out.sort_unstable();
        pool.clear();
        Ok(out)
    } else {
        let mut out: Vec<u32> = Vec::with_capacity(k);
        while out.len() < k {
            let cand = rng.random_range(0..n);
            if excluded.binary_search(&cand).is_ok() || out.contains(&cand) {
                continue;
            }
            out.push(cand);
        }
        Ok(out)
    }
}

/// Mean over negatives of `max(0, ||a-p|| - ||a-n|| + margin)` with
/// Euclidean distances.
pub fn triplet_loss<T: Real>(
    anchor: &[T],
    positive: &[T],
    negatives: &[&[T]],
    margin: T,
) -> Result<T> {
    if negatives.is_empty() {
        return Err(Error::Config("triplet loss needs at least one negative".into()));
    }
    let d_pos = euclidean(anchor, positive);
    let mut total = T::zero();
    for n in negatives {
        let hinge = d_pos - euclidean(anchor, n) + margin;
        if hinge > T::zero() {
            total += hinge;
        }
    }
    Ok(total / T::from_f64(negatives.len() as f64))
}

/// Gradients of `scale * triplet_loss` with respect to the anchor, the
/// positive and each negative. At the hinge kink and at coincident points
/// the subgradient 0 is used.
pub fn triplet_backward<T: Real>(
    anchor: &[T],
    positive: &[T],
    negatives: &[&[T]],
    margin: T,
    scale: T,
    d_anchor: &mut [T],
    d_positive: &mut [T],
    d_negatives: &mut [Vec<T>],
) {
    let d = anchor.len();
    let k = T::from_f64(negatives.len() as f64);
    let w = scale / k;
    let d_pos = euclidean(anchor, positive);
    for (ni, n) in negatives.iter().enumerate() {
        let d_neg = euclidean(anchor, n);
        let hinge = d_pos - d_neg + margin;
        if hinge <= T::zero() {
            continue;
        }
        // d||a-p||/da = (a-p)/||a-p||; zero when the distance is zero.
        if d_pos > T::zero() {
            let inv = w / d_pos;
            for c in 0..d {
                let g = (anchor[c] - positive[c]) * inv;
                d_anchor[c] += g;
                d_positive[c] -= g;
            }
        }
        if d_neg > T::zero() {
            let inv = w / d_neg;
            for c in 0..d {
                let g = (anchor[c] - n[c]) * inv;
                d_anchor[c] -= g;
                d_negatives[ni][c] += g;
            }
        }
    }
}
