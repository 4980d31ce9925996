//! Sequence encoders: stacked dilated causal convolutions with residual
//! blocks (the main encoder) and a GRU comparator.
//!
//! Both encoders are causal — output at position `t` depends only on inputs
//! at positions `<= t` — and both zero the inputs at padded positions before
//! any computation. The final sequence representation is the last position's
//! output; histories are padded at the front, so the last position is the
//! most recent real event.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{InitKind, LayoutBuilder};
use crate::math::{dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    NextItNet,
    Gru,
}

impl EncoderKind {
    pub fn parse(s: &str) -> Option<EncoderKind> {
        match s {
            "nextitnet" => Some(EncoderKind::NextItNet),
            "gru" => Some(EncoderKind::Gru),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::NextItNet => "nextitnet",
            EncoderKind::Gru => "gru",
        }
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ConvRef {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
pub struct LnRef {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct NextItNetLayout {
    pub d: usize,
    pub kernel: usize,
    pub convs: Vec<ConvRef>,
    pub lns: Vec<LnRef>,
}

#[derive(Debug, Clone)]
pub struct GruLayout {
    pub d: usize,
    pub wz: Range<usize>,
    pub uz: Range<usize>,
    pub bz: Range<usize>,
    pub wr: Range<usize>,
    pub ur: Range<usize>,
    pub br: Range<usize>,
    pub wh: Range<usize>,
    pub uh: Range<usize>,
    pub bh: Range<usize>,
}

#[derive(Debug, Clone)]
pub enum EncoderLayout {
    NextItNet(NextItNetLayout),
    Gru(GruLayout),
}

/// Residual blocks consume the dilation schedule in pairs:
/// conv -> layer norm -> ReLU -> conv -> layer norm -> ReLU -> add input.
pub fn build_nextitnet_layout(
    lb: &mut LayoutBuilder,
    d: usize,
    kernel: usize,
    dilations: &[usize],
) -> Result<NextItNetLayout> {
    if kernel == 0 {
        return Err(Error::Config("kernel width must be >= 1".into()));
    }
    if dilations.is_empty() || dilations.len() % 2 != 0 {
        return Err(Error::Config(
            "dilation schedule must be non-empty with an even number of entries".into(),
        ));
    }
    if dilations.iter().any(|&x| x == 0) {
        return Err(Error::Config("dilations must be >= 1".into()));
    }
    let mut convs = Vec::new();
    let mut lns = Vec::new();
    for (l, &dilation) in dilations.iter().enumerate() {
        let w = lb.push(
            &format!("enc.conv{l}.w"),
            &[kernel, d, d],
            InitKind::NormalScaled(kernel * d),
        );
        let b = lb.push(&format!("enc.conv{l}.b"), &[d], InitKind::Zeros);
        convs.push(ConvRef { w, b, dilation });
        let gamma = lb.push(&format!("enc.ln{l}.gamma"), &[d], InitKind::Ones);
        let beta = lb.push(&format!("enc.ln{l}.beta"), &[d], InitKind::Zeros);
        lns.push(LnRef { gamma, beta });
    }
    Ok(NextItNetLayout {
        d,
        kernel,
        convs,
        lns,
    })
}

pub fn build_gru_layout(lb: &mut LayoutBuilder, d: usize) -> GruLayout {
    let mat = InitKind::NormalScaled(d);
    GruLayout {
        d,
        wz: lb.push("enc.gru.wz", &[d, d], mat),
        uz: lb.push("enc.gru.uz", &[d, d], mat),
        bz: lb.push("enc.gru.bz", &[d], InitKind::Zeros),
        wr: lb.push("enc.gru.wr", &[d, d], mat),
        ur: lb.push("enc.gru.ur", &[d, d], mat),
        br: lb.push("enc.gru.br", &[d], InitKind::Zeros),
        wh: lb.push("enc.gru.wh", &[d, d], mat),
        uh: lb.push("enc.gru.uh", &[d, d], mat),
        bh: lb.push("enc.gru.bh", &[d], InitKind::Zeros),
    }
}

pub fn build_encoder_layout(
    lb: &mut LayoutBuilder,
    kind: EncoderKind,
    d: usize,
    kernel: usize,
    dilations: &[usize],
) -> Result<EncoderLayout> {
    Ok(match kind {
        EncoderKind::NextItNet => {
            EncoderLayout::NextItNet(build_nextitnet_layout(lb, d, kernel, dilations)?)
        }
        EncoderKind::Gru => EncoderLayout::Gru(build_gru_layout(lb, d)),
    })
}

/// Forward activations kept for the backward pass. One cache is reused
/// across samples; buffers are sized on first use.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    pub input: Vec<T>,
    // NextItNet: per conv layer.
    conv_in: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    ln_out: Vec<Vec<T>>,
    ln_mean: Vec<Vec<T>>,
    ln_istd: Vec<Vec<T>>,
    // GRU: per position gate activations.
    gru_z: Vec<T>,
    gru_r: Vec<T>,
    gru_hc: Vec<T>,
    gru_rh: Vec<T>,
    /// Per-position outputs, `h x d`.
    pub out: Vec<T>,
    // Backward scratch.
    scratch_a: Vec<T>,
    scratch_b: Vec<T>,
}

fn reset<T: Real>(buf: &mut Vec<T>, len: usize) {
    if buf.len() != len {
        buf.clear();
        buf.resize(len, T::zero());
    }
}

impl<T> Default for EncoderCache<T> {
    fn default() -> Self {
        EncoderCache {
            input: Vec::new(),
            conv_in: Vec::new(),
            conv_out: Vec::new(),
            ln_out: Vec::new(),
            ln_mean: Vec::new(),
            ln_istd: Vec::new(),
            gru_z: Vec::new(),
            gru_r: Vec::new(),
            gru_hc: Vec::new(),
            gru_rh: Vec::new(),
            out: Vec::new(),
            scratch_a: Vec::new(),
            scratch_b: Vec::new(),
        }
    }
}

impl<T: Real> EncoderCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_nextitnet(&mut self, layers: usize, h: usize, d: usize) {
        let hd = h * d;
        for v in [
            &mut self.conv_in,
            &mut self.conv_out,
            &mut self.ln_out,
        ] {
            v.resize_with(layers, Vec::new);
            for buf in v.iter_mut() {
                reset(buf, hd);
            }
        }
        for v in [&mut self.ln_mean, &mut self.ln_istd] {
            v.resize_with(layers, Vec::new);
            for buf in v.iter_mut() {
                reset(buf, h);
            }
        }
        reset(&mut self.input, hd);
        reset(&mut self.out, hd);
        reset(&mut self.scratch_a, hd);
        reset(&mut self.scratch_b, hd);
    }

    fn ensure_gru(&mut self, h: usize, d: usize) {
        let hd = h * d;
        reset(&mut self.input, hd);
        reset(&mut self.gru_z, hd);
        reset(&mut self.gru_r, hd);
        reset(&mut self.gru_hc, hd);
        reset(&mut self.gru_rh, hd);
        reset(&mut self.out, hd);
    }
}

#[inline]
fn conv_input_pos(t: usize, tap: usize, kernel: usize, dilation: usize) -> Option<usize> {
    t.checked_sub((kernel - 1 - tap) * dilation)
}

fn conv_forward<T: Real>(
    w: &[T],
    b: &[T],
    kernel: usize,
    dilation: usize,
    input: &[T],
    out: &mut [T],
    h: usize,
    d: usize,
) {
    for t in 0..h {
        let out_row = &mut out[t * d..(t + 1) * d];
        out_row.copy_from_slice(b);
        for tap in 0..kernel {
            let Some(s) = conv_input_pos(t, tap, kernel, dilation) else {
                continue;
            };
            let in_row = &input[s * d..(s + 1) * d];
            let w_tap = &w[tap * d * d..(tap + 1) * d * d];
            for (o, out_val) in out_row.iter_mut().enumerate() {
                *out_val += dot(&w_tap[o * d..(o + 1) * d], in_row);
            }
        }
    }
}

/// Accumulates dW and db into `grads` (via the conv's ranges) and dL/dinput
/// into `d_input`.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    params: &[T],
    conv: &ConvRef,
    kernel: usize,
    input: &[T],
    d_out: &[T],
    grads: &mut [T],
    d_input: &mut [T],
    h: usize,
    d: usize,
) {
    let w_off = conv.w.start;
    let b_off = conv.b.start;
    let w = &params[conv.w.clone()];
    for t in 0..h {
        let dout_base = t * d;
        for o in 0..d {
            grads[b_off + o] += d_out[dout_base + o];
        }
        for tap in 0..kernel {
            let Some(s) = conv_input_pos(t, tap, kernel, conv.dilation) else {
                continue;
            };
            for o in 0..d {
                let g = d_out[dout_base + o];
                if g == T::zero() {
                    continue;
                }
                let base = (tap * d + o) * d;
                let wk = &w[base..base + d];
                let dwk = &mut grads[w_off + base..w_off + base + d];
                let in_row = &input[s * d..(s + 1) * d];
                let din_row = &mut d_input[s * d..(s + 1) * d];
                for c in 0..d {
                    dwk[c] += g * in_row[c];
                    din_row[c] += g * wk[c];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_forward<T: Real>(
    gamma: &[T],
    beta: &[T],
    input: &[T],
    out: &mut [T],
    mean: &mut [T],
    istd: &mut [T],
    h: usize,
    d: usize,
) {
    let dn = T::from_f64(d as f64);
    let eps = T::from_f64(LN_EPS);
    for t in 0..h {
        let x = &input[t * d..(t + 1) * d];
        let y = &mut out[t * d..(t + 1) * d];
        let mut mu = T::zero();
        for v in x {
            mu += *v;
        }
        mu /= dn;
        let mut var = T::zero();
        for v in x {
            let c = *v - mu;
            var += c * c;
        }
        var /= dn;
        let inv = T::one() / (var + eps).sqrt();
        mean[t] = mu;
        istd[t] = inv;
        for c in 0..d {
            y[c] = gamma[c] * ((x[c] - mu) * inv) + beta[c];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Real>(
    params: &[T],
    ln: &LnRef,
    input: &[T],
    mean: &[T],
    istd: &[T],
    d_out: &[T],
    grads: &mut [T],
    d_input: &mut [T],
    h: usize,
    d: usize,
) {
    let dn = T::from_f64(d as f64);
    let gamma = &params[ln.gamma.clone()];
    let g_off = ln.gamma.start;
    let b_off = ln.beta.start;
    for t in 0..h {
        let x = &input[t * d..(t + 1) * d];
        let dy = &d_out[t * d..(t + 1) * d];
        // Gradient is sparse over positions (often only the final one);
        // zero rows contribute nothing anywhere below.
        if dy.iter().all(|&v| v == T::zero()) {
            d_input[t * d..(t + 1) * d].fill(T::zero());
            continue;
        }
        let mu = mean[t];
        let inv = istd[t];
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for c in 0..d {
            let xhat = (x[c] - mu) * inv;
            let dxhat = dy[c] * gamma[c];
            grads[g_off + c] += dy[c] * xhat;
            grads[b_off + c] += dy[c];
            m1 += dxhat;
            m2 += dxhat * xhat;
        }
        m1 /= dn;
        m2 /= dn;
        let dx = &mut d_input[t * d..(t + 1) * d];
        for c in 0..d {
            let xhat = (x[c] - mu) * inv;
            let dxhat = dy[c] * gamma[c];
            dx[c] = inv * (dxhat - m1 - xhat * m2);
        }
    }
}

/// NextItNet forward. `input` is `h x d` with padded rows already zeroed
/// (see [`encode`]); per-position outputs land in `cache.out`.
pub fn nextitnet_forward<T: Real>(
    params: &[T],
    lay: &NextItNetLayout,
    input: &[T],
    h: usize,
    cache: &mut EncoderCache<T>,
) {
    let d = lay.d;
    let layers = lay.convs.len();
    cache.ensure_nextitnet(layers, h, d);
    cache.input.copy_from_slice(input);
    let EncoderCache {
        conv_in,
        conv_out,
        ln_out,
        ln_mean,
        ln_istd,
        out,
        ..
    } = cache;
    out.copy_from_slice(input);
    for block in 0..layers / 2 {
        for half in 0..2 {
            let l = block * 2 + half;
            let conv = &lay.convs[l];
            let ln = &lay.lns[l];
            conv_in[l].copy_from_slice(out);
            conv_forward(
                &params[conv.w.clone()],
                &params[conv.b.clone()],
                lay.kernel,
                conv.dilation,
                &conv_in[l],
                &mut conv_out[l],
                h,
                d,
            );
            layer_norm_forward(
                &params[ln.gamma.clone()],
                &params[ln.beta.clone()],
                &conv_out[l],
                &mut ln_out[l],
                &mut ln_mean[l],
                &mut ln_istd[l],
                h,
                d,
            );
            for (dst, src) in out.iter_mut().zip(ln_out[l].iter()) {
                *dst = if *src > T::zero() { *src } else { T::zero() };
            }
        }
        // Residual connection around the two-conv block.
        for (dst, src) in out.iter_mut().zip(conv_in[block * 2].iter()) {
            *dst += *src;
        }
    }
}

/// NextItNet backward. `d_out` is dL/d(per-position output) and is
/// consumed; parameter gradients accumulate into `grads` and input
/// gradients into `d_input`.
pub fn nextitnet_backward<T: Real>(
    params: &[T],
    lay: &NextItNetLayout,
    cache: &mut EncoderCache<T>,
    h: usize,
    d_out: &mut [T],
    grads: &mut [T],
    d_input: &mut [T],
) {
    let d = lay.d;
    let layers = lay.convs.len();
    let EncoderCache {
        conv_in,
        conv_out,
        ln_out,
        ln_mean,
        ln_istd,
        scratch_a,
        scratch_b,
        ..
    } = cache;
    for block in (0..layers / 2).rev() {
        // d_out holds dL/d(block output); the conv-path gradient starts
        // equal to it and the skip connection re-joins at the block input.
        scratch_a.copy_from_slice(d_out);
        for half in (0..2).rev() {
            let l = block * 2 + half;
            // ReLU backward on the conv-path gradient.
            for (g, y) in scratch_a.iter_mut().zip(ln_out[l].iter()) {
                if *y <= T::zero() {
                    *g = T::zero();
                }
            }
            scratch_b.iter_mut().for_each(|x| *x = T::zero());
            layer_norm_backward(
                params,
                &lay.lns[l],
                &conv_out[l],
                &ln_mean[l],
                &ln_istd[l],
                scratch_a,
                grads,
                scratch_b,
                h,
                d,
            );
            scratch_a.iter_mut().for_each(|x| *x = T::zero());
            conv_backward(
                params,
                &lay.convs[l],
                lay.kernel,
                &conv_in[l],
                scratch_b,
                grads,
                scratch_a,
                h,
                d,
            );
        }
        // scratch_a = dL/d(block input) via the conv path; add the skip.
        for (acc, skip) in scratch_a.iter_mut().zip(d_out.iter()) {
            *acc += *skip;
        }
        d_out.copy_from_slice(scratch_a);
    }
    for (dst, src) in d_input.iter_mut().zip(d_out.iter()) {
        *dst += *src;
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `out[o] += sum_c w[o,c] * x[c]`
fn matvec_acc<T: Real>(w: &[T], x: &[T], out: &mut [T], d: usize) {
    for (o, dst) in out.iter_mut().enumerate() {
        *dst += dot(&w[o * d..(o + 1) * d], x);
    }
}

/// Backward of `y += W x`: accumulate `dW[o,c] += g[o] x[c]` into `grads`
/// at `w_range` and `d_x[c] += sum_o W[o,c] g[o]`.
fn matvec_backward<T: Real>(
    params: &[T],
    w_range: &Range<usize>,
    x: &[T],
    g: &[T],
    grads: &mut [T],
    d_x: &mut [T],
    d: usize,
) {
    let w = &params[w_range.clone()];
    let w_off = w_range.start;
    for (o, gv) in g.iter().enumerate() {
        let gv = *gv;
        if gv == T::zero() {
            continue;
        }
        let row = &w[o * d..(o + 1) * d];
        let drow = &mut grads[w_off + o * d..w_off + (o + 1) * d];
        for c in 0..d {
            drow[c] += gv * x[c];
            d_x[c] += gv * row[c];
        }
    }
}

/// GRU forward over `h x d` inputs (padded rows already zeroed).
pub fn gru_forward<T: Real>(
    params: &[T],
    lay: &GruLayout,
    input: &[T],
    h: usize,
    cache: &mut EncoderCache<T>,
) {
    let d = lay.d;
    cache.ensure_gru(h, d);
    cache.input.copy_from_slice(input);
    let EncoderCache {
        gru_z,
        gru_r,
        gru_hc,
        gru_rh,
        out,
        ..
    } = cache;
    let mut h_prev = vec![T::zero(); d];
    for t in 0..h {
        let x = &input[t * d..(t + 1) * d];
        let z = &mut gru_z[t * d..(t + 1) * d];
        z.copy_from_slice(&params[lay.bz.clone()]);
        matvec_acc(&params[lay.wz.clone()], x, z, d);
        matvec_acc(&params[lay.uz.clone()], &h_prev, z, d);
        for v in z.iter_mut() {
            *v = sigmoid(*v);
        }
        let r = &mut gru_r[t * d..(t + 1) * d];
        r.copy_from_slice(&params[lay.br.clone()]);
        matvec_acc(&params[lay.wr.clone()], x, r, d);
        matvec_acc(&params[lay.ur.clone()], &h_prev, r, d);
        for v in r.iter_mut() {
            *v = sigmoid(*v);
        }
        let rh = &mut gru_rh[t * d..(t + 1) * d];
        for c in 0..d {
            rh[c] = gru_r[t * d + c] * h_prev[c];
        }
        let hc = &mut gru_hc[t * d..(t + 1) * d];
        hc.copy_from_slice(&params[lay.bh.clone()]);
        matvec_acc(&params[lay.wh.clone()], x, hc, d);
        matvec_acc(
            &params[lay.uh.clone()],
            &gru_rh[t * d..(t + 1) * d],
            hc,
            d,
        );
        for v in hc.iter_mut() {
            *v = v.tanh();
        }
        let out_row = &mut out[t * d..(t + 1) * d];
        for c in 0..d {
            let zv = gru_z[t * d + c];
            out_row[c] = (T::one() - zv) * h_prev[c] + zv * gru_hc[t * d + c];
        }
        h_prev.copy_from_slice(out_row);
    }
}

/// GRU backward (BPTT). `d_out` is dL/d(per-position output), consumed.
pub fn gru_backward<T: Real>(
    params: &[T],
    lay: &GruLayout,
    cache: &EncoderCache<T>,
    h: usize,
    d_out: &[T],
    grads: &mut [T],
    d_input: &mut [T],
) {
    let d = lay.d;
    let mut dh = vec![T::zero(); d];
    let mut dh_prev = vec![T::zero(); d];
    let mut da = vec![T::zero(); d];
    let mut dz = vec![T::zero(); d];
    let mut dr = vec![T::zero(); d];
    let mut d_rh = vec![T::zero(); d];
    let zero_row = vec![T::zero(); d];
    for t in (0..h).rev() {
        for c in 0..d {
            dh[c] += d_out[t * d + c];
        }
        let h_prev: &[T] = if t == 0 {
            &zero_row
        } else {
            &cache.out[(t - 1) * d..t * d]
        };
        let x = &cache.input[t * d..(t + 1) * d];
        let z = &cache.gru_z[t * d..(t + 1) * d];
        let r = &cache.gru_r[t * d..(t + 1) * d];
        let hc = &cache.gru_hc[t * d..(t + 1) * d];
        let rh = &cache.gru_rh[t * d..(t + 1) * d];
        dh_prev.iter_mut().for_each(|v| *v = T::zero());

        // h_t = (1 - z) h_prev + z hc
        for c in 0..d {
            da[c] = dh[c] * z[c] * (T::one() - hc[c] * hc[c]);
            dh_prev[c] += dh[c] * (T::one() - z[c]);
            dz[c] = dh[c] * (hc[c] - h_prev[c]) * z[c] * (T::one() - z[c]);
        }
        // Candidate: hc = tanh(Wh x + Uh (r h_prev) + bh)
        for c in 0..d {
            grads[lay.bh.start + c] += da[c];
        }
        matvec_backward(params, &lay.wh, x, &da, grads, &mut d_input[t * d..(t + 1) * d], d);
        d_rh.iter_mut().for_each(|v| *v = T::zero());
        matvec_backward(params, &lay.uh, rh, &da, grads, &mut d_rh, d);
        for c in 0..d {
            dr[c] = d_rh[c] * h_prev[c] * r[c] * (T::one() - r[c]);
            dh_prev[c] += d_rh[c] * r[c];
        }
        // Reset gate.
        for c in 0..d {
            grads[lay.br.start + c] += dr[c];
        }
        matvec_backward(params, &lay.wr, x, &dr, grads, &mut d_input[t * d..(t + 1) * d], d);
        matvec_backward(params, &lay.ur, h_prev, &dr, grads, &mut dh_prev, d);
        // Update gate.
        for c in 0..d {
            grads[lay.bz.start + c] += dz[c];
        }
        matvec_backward(params, &lay.wz, x, &dz, grads, &mut d_input[t * d..(t + 1) * d], d);
        matvec_backward(params, &lay.uz, h_prev, &dz, grads, &mut dh_prev, d);
        dh.copy_from_slice(&dh_prev);
    }
}

/// Encode a history. `history_embeddings` is `h x d`; rows where
/// `padding_mask[t]` is true are zeroed before the encoder runs. Per-position
/// outputs land in `cache.out`; the final representation is row `h-1` (with
/// front padding the last position is always the most recent real event).
pub fn encode<T: Real>(
    params: &[T],
    layout: &EncoderLayout,
    history_embeddings: &[T],
    h: usize,
    d: usize,
    padding_mask: &[bool],
    cache: &mut EncoderCache<T>,
) -> Result<()> {
    if history_embeddings.len() != h * d || padding_mask.len() != h {
        return Err(Error::Shape(format!(
            "encode expects {h}x{d} embeddings and mask of length {h}"
        )));
    }
    let mut masked = history_embeddings.to_vec();
    for (t, &pad) in padding_mask.iter().enumerate() {
        if pad {
            masked[t * d..(t + 1) * d].fill(T::zero());
        }
    }
    match layout {
        EncoderLayout::NextItNet(lay) => nextitnet_forward(params, lay, &masked, h, cache),
        EncoderLayout::Gru(lay) => gru_forward(params, lay, &masked, h, cache),
    }
    Ok(())
}

pub fn encoder_backward<T: Real>(
    params: &[T],
    layout: &EncoderLayout,
    cache: &mut EncoderCache<T>,
    h: usize,
    d_out: &mut [T],
    grads: &mut [T],
    d_input: &mut [T],
) {
    match layout {
        EncoderLayout::NextItNet(lay) => {
            nextitnet_backward(params, lay, cache, h, d_out, grads, d_input)
        }
        EncoderLayout::Gru(lay) => gru_backward(params, lay, cache, h, d_out, grads, d_input),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::init_params;
    use crate::math::relative_error;
    use crate::rng::stream;
    use rand::Rng;

    fn make_nextitnet(
        d: usize,
        kernel: usize,
        dils: &[usize],
        seed: u64,
    ) -> (Vec<f64>, NextItNetLayout) {
        let mut lb = LayoutBuilder::new();
        let lay = build_nextitnet_layout(&mut lb, d, kernel, dils).unwrap();
        let (metas, total) = lb.finish();
        (init_params(&metas, total, seed), lay)
    }

    fn make_gru(d: usize, seed: u64) -> (Vec<f64>, GruLayout) {
        let mut lb = LayoutBuilder::new();
        let lay = build_gru_layout(&mut lb, d);
        let (metas, total) = lb.finish();
        (init_params(&metas, total, seed), lay)
    }

    fn random_input(h: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, "enc.test", &[]);
        (0..h * d).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn zero_conv_weights_give_identity() {
        let (mut params, lay) = make_nextitnet(4, 3, &[1, 2], 5);
        for conv in &lay.convs {
            params[conv.w.clone()].fill(0.0);
            params[conv.b.clone()].fill(0.0);
        }
        let input = random_input(6, 4, 1);
        let mut cache = EncoderCache::new();
        nextitnet_forward(&params, &lay, &input, 6, &mut cache);
        assert_eq!(cache.out, input);
    }

    #[test]
    fn output_shapes_are_forced() {
        let (params, lay) = make_nextitnet(8, 3, &[1, 2, 4, 8, 1, 2, 4, 8], 2);
        let input = random_input(20, 8, 3);
        let mut cache = EncoderCache::new();
        nextitnet_forward(&params, &lay, &input, 20, &mut cache);
        assert_eq!(cache.out.len(), 20 * 8);
    }

    #[test]
    fn nextitnet_is_causal() {
        let (params, lay) = make_nextitnet(6, 3, &[1, 2, 1, 2], 4);
        let h = 20;
        let input = random_input(h, 6, 9);
        let mut cache = EncoderCache::new();
        nextitnet_forward(&params, &lay, &input, h, &mut cache);
        let base = cache.out.clone();
        let mut perturbed = input.clone();
        for c in 0..6 {
            perturbed[10 * 6 + c] += 1.0;
        }
        nextitnet_forward(&params, &lay, &perturbed, h, &mut cache);
        assert_eq!(&cache.out[..10 * 6], &base[..10 * 6]);
        // And the perturbation does reach position 10.
        assert_ne!(&cache.out[10 * 6..11 * 6], &base[10 * 6..11 * 6]);
    }

    #[test]
    fn gru_is_causal_and_zero_at_zero() {
        let (params, lay) = make_gru(4, 8);
        let h = 8;
        let input = random_input(h, 4, 2);
        let mut cache = EncoderCache::new();
        gru_forward(&params, &lay, &input, h, &mut cache);
        let base = cache.out.clone();
        let mut perturbed = input.clone();
        perturbed[5 * 4] += 0.7;
        gru_forward(&params, &lay, &perturbed, h, &mut cache);
        assert_eq!(&cache.out[..5 * 4], &base[..5 * 4]);

        // Zero weights and biases: all outputs zero.
        let zeros = vec![0.0; params.len()];
        gru_forward(&zeros, &lay, &input, h, &mut cache);
        assert!(cache.out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gru_single_step_final_equals_position_zero() {
        let (params, lay) = make_gru(4, 3);
        let input = random_input(1, 4, 5);
        let mut cache = EncoderCache::new();
        gru_forward(&params, &lay, &input, 1, &mut cache);
        assert_eq!(cache.out.len(), 4);
    }

    #[test]
    fn encode_zeroes_padded_positions() {
        let (params, lay) = make_nextitnet(4, 3, &[1, 2], 6);
        let layout = EncoderLayout::NextItNet(lay);
        let h = 5;
        let input = random_input(h, 4, 7);
        let mask = [true, true, false, false, false];
        let mut cache = EncoderCache::new();
        encode(&params, &layout, &input, h, 4, &mask, &mut cache).unwrap();
        let base = cache.out.clone();
        // Change padded content entirely; outputs must be bit-identical.
        let mut altered = input;
        for c in 0..8 {
            altered[c] = 99.0 + c as f64;
        }
        encode(&params, &layout, &altered, h, 4, &mask, &mut cache).unwrap();
        assert_eq!(cache.out, base);
    }

    /// Scalar loss = fixed random projection of all per-position outputs.
    fn proj_loss(params: &[f64], layout: &EncoderLayout, input: &[f64], h: usize) -> f64 {
        let mut cache = EncoderCache::new();
        match layout {
            EncoderLayout::NextItNet(l) => nextitnet_forward(params, l, input, h, &mut cache),
            EncoderLayout::Gru(l) => gru_forward(params, l, input, h, &mut cache),
        }
        let mut rng = stream(123, "proj", &[]);
        let mut loss = 0.0;
        for v in &cache.out {
            loss += v * (rng.random::<f64>() - 0.5);
        }
        loss
    }

    fn grad_check_encoder(layout: EncoderLayout, params: Vec<f64>, h: usize, d: usize) {
        let input = random_input(h, d, 11);
        let mut cache = EncoderCache::new();
        match &layout {
            EncoderLayout::NextItNet(l) => nextitnet_forward(&params, l, &input, h, &mut cache),
            EncoderLayout::Gru(l) => gru_forward(&params, l, &input, h, &mut cache),
        }
        let mut rng = stream(123, "proj", &[]);
        let mut d_out: Vec<f64> = (0..h * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut grads = vec![0.0; params.len()];
        let mut d_input = vec![0.0; input.len()];
        match &layout {
            EncoderLayout::NextItNet(l) => nextitnet_backward(
                &params, l, &mut cache, h, &mut d_out, &mut grads, &mut d_input,
            ),
            EncoderLayout::Gru(l) => {
                gru_backward(&params, l, &cache, h, &d_out, &mut grads, &mut d_input)
            }
        }
        let h_step = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h_step;
            let mut minus = params.clone();
            minus[i] -= h_step;
            let num = (proj_loss(&plus, &layout, &input, h)
                - proj_loss(&minus, &layout, &input, h))
                / (2.0 * h_step);
            let rel = relative_error(grads[i], num);
            assert!(
                rel < 1e-4,
                "param {i}: analytic {} numeric {num}",
                grads[i]
            );
        }
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h_step;
            let mut minus = input.clone();
            minus[i] -= h_step;
            let num = (proj_loss(&params, &layout, &plus, h)
                - proj_loss(&params, &layout, &minus, h))
                / (2.0 * h_step);
            let rel = relative_error(d_input[i], num);
            assert!(
                rel < 1e-4,
                "input {i}: analytic {} numeric {num}",
                d_input[i]
            );
        }
    }

    #[test]
    fn nextitnet_gradients_match_finite_differences() {
        let (params, lay) = make_nextitnet(4, 3, &[1, 2], 21);
        grad_check_encoder(EncoderLayout::NextItNet(lay), params, 5, 4);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let (params, lay) = make_gru(4, 22);
        grad_check_encoder(EncoderLayout::Gru(lay), params, 3, 4);
    }

    #[test]
    fn bad_schedules_are_rejected() {
        let mut lb = LayoutBuilder::new();
        assert!(build_nextitnet_layout(&mut lb, 4, 3, &[1, 2, 4]).is_err());
        assert!(build_nextitnet_layout(&mut lb, 4, 3, &[]).is_err());
        assert!(build_nextitnet_layout(&mut lb, 4, 0, &[1, 2]).is_err());
        assert!(build_nextitnet_layout(&mut lb, 4, 3, &[1, 0]).is_err());
    }
}
