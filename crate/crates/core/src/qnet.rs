//! Scenario-aware user intent module: contextual Q estimators (masked
//! multi-head attention over fused item+scenario embeddings, concatenated
//! with the sequence representation, through two fully connected layers and
//! a softmax), the Double Q-learning step, the confidence gate, and an
//! exact tabular reference implementation.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::layout::{InitKind, LayoutBuilder};
use crate::math::{dot, softmax_backward_in_place, softmax_in_place, Real};

/// Which estimator a Double Q-learning step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    A,
    B,
}

/// Layout of one contextual Q estimator.
///
/// `wq`/`wk`/`wv` are `d x d` with per-head column blocks (head `i` owns
/// columns `i*dk..(i+1)*dk`), `wo` is the `d x d` output projection, and the
/// two fully connected layers map `2d -> dh -> num_scenarios`.
#[derive(Debug, Clone)]
pub struct QLayout {
    pub d: usize,
    pub heads: usize,
    pub dh: usize,
    pub num_scenarios: usize,
    pub wq: Range<usize>,
    pub wk: Range<usize>,
    pub wv: Range<usize>,
    pub wo: Range<usize>,
    pub fc1_w: Range<usize>,
    pub fc1_b: Range<usize>,
    pub fc2_w: Range<usize>,
    pub fc2_b: Range<usize>,
}

pub fn build_q_layout(
    lb: &mut LayoutBuilder,
    prefix: &str,
    d: usize,
    heads: usize,
    num_scenarios: usize,
) -> Result<QLayout> {
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!(
            "attention heads ({heads}) must divide the embedding dimension ({d})"
        )));
    }
    let dh = d;
    let mat = InitKind::NormalScaled(d);
    Ok(QLayout {
        d,
        heads,
        dh,
        num_scenarios,
        wq: lb.push(&format!("{prefix}.attn.wq"), &[d, d], mat),
        wk: lb.push(&format!("{prefix}.attn.wk"), &[d, d], mat),
        wv: lb.push(&format!("{prefix}.attn.wv"), &[d, d], mat),
        wo: lb.push(&format!("{prefix}.attn.wo"), &[d, d], mat),
        fc1_w: lb.push(
            &format!("{prefix}.fc1.w"),
            &[2 * d, dh],
            InitKind::NormalScaled(2 * d),
        ),
        fc1_b: lb.push(&format!("{prefix}.fc1.b"), &[dh], InitKind::Zeros),
        fc2_w: lb.push(
            &format!("{prefix}.fc2.w"),
            &[dh, num_scenarios],
            InitKind::NormalScaled(dh),
        ),
        fc2_b: lb.push(
            &format!("{prefix}.fc2.b"),
            &[num_scenarios],
            InitKind::Zeros,
        ),
    })
}

/// `out[u] += sum_c x[c] * w[c, u]` for a row-major `in_dim x out_dim` matrix.
fn vecmat_acc<T: Real>(x: &[T], w: &[T], out: &mut [T], out_dim: usize) {
    for (c, xv) in x.iter().enumerate() {
        let xv = *xv;
        if xv == T::zero() {
            continue;
        }
        let row = &w[c * out_dim..(c + 1) * out_dim];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += xv * *wv;
        }
    }
}

/// Backward of `y += x W`: `dW[c,u] += x[c] dy[u]`, `dx[c] += <W[c,:], dy>`.
fn vecmat_backward<T: Real>(
    params: &[T],
    w_range: &Range<usize>,
    x: &[T],
    dy: &[T],
    grads: &mut [T],
    dx: &mut [T],
    out_dim: usize,
) {
    let w_off = w_range.start;
    let w = &params[w_range.clone()];
    for (c, xv) in x.iter().enumerate() {
        let xv = *xv;
        let row = &w[c * out_dim..(c + 1) * out_dim];
        let drow = &mut grads[w_off + c * out_dim..w_off + (c + 1) * out_dim];
        for (dw, dyv) in drow.iter_mut().zip(dy) {
            *dw += xv * *dyv;
        }
        dx[c] += dot(row, dy);
    }
}

/// Forward activations of one estimator evaluation plus backward scratch.
/// One cache is reused across samples.
#[derive(Debug, Clone)]
pub struct QCache<T> {
    pub fused: Vec<T>,
    pub e_q: Vec<T>,
    pub q_proj: Vec<T>,
    pub k_proj: Vec<T>,
    pub v_proj: Vec<T>,
    /// `heads x h` attention weights; exactly zero at masked positions.
    pub attn: Vec<T>,
    pub head_cat: Vec<T>,
    pub attn_rep: Vec<T>,
    pub z: Vec<T>,
    pub a1: Vec<T>,
    pub probs: Vec<T>,
    pub last_real: Option<usize>,
    pub n_real: usize,
    logits: Vec<T>,
    bw_da1: Vec<T>,
    bw_dz: Vec<T>,
    bw_dhead: Vec<T>,
    bw_dq: Vec<T>,
    bw_dk: Vec<T>,
    bw_dv: Vec<T>,
    bw_dw: Vec<T>,
    bw_dvec: Vec<T>,
}

impl<T> Default for QCache<T> {
    fn default() -> Self {
        QCache {
            fused: Vec::new(),
            e_q: Vec::new(),
            q_proj: Vec::new(),
            k_proj: Vec::new(),
            v_proj: Vec::new(),
            attn: Vec::new(),
            head_cat: Vec::new(),
            attn_rep: Vec::new(),
            z: Vec::new(),
            a1: Vec::new(),
            probs: Vec::new(),
            last_real: None,
            n_real: 0,
            logits: Vec::new(),
            bw_da1: Vec::new(),
            bw_dz: Vec::new(),
            bw_dhead: Vec::new(),
            bw_dq: Vec::new(),
            bw_dk: Vec::new(),
            bw_dv: Vec::new(),
            bw_dw: Vec::new(),
            bw_dvec: Vec::new(),
        }
    }
}

impl<T: Real> QCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, h: usize, d: usize, heads: usize, dh: usize, s: usize) {
        // Buffers that are fully overwritten each call only get resized;
        // accumulators (and the contract-visible attention weights) are
        // zeroed every call.
        let resize = |v: &mut Vec<T>, n: usize| {
            if v.len() != n {
                v.clear();
                v.resize(n, T::zero());
            }
        };
        let zero = |v: &mut Vec<T>, n: usize| {
            v.clear();
            v.resize(n, T::zero());
        };
        resize(&mut self.fused, h * d);
        resize(&mut self.e_q, d);
        zero(&mut self.q_proj, d);
        zero(&mut self.k_proj, h * d);
        zero(&mut self.v_proj, h * d);
        zero(&mut self.attn, heads * h);
        zero(&mut self.head_cat, d);
        zero(&mut self.attn_rep, d);
        resize(&mut self.z, 2 * d);
        resize(&mut self.a1, dh);
        resize(&mut self.probs, s);
        resize(&mut self.logits, h);
        self.last_real = None;
        self.n_real = 0;
    }

    fn ensure_backward(&mut self, h: usize, d: usize, dh: usize) {
        let resize = |v: &mut Vec<T>, n: usize| {
            v.clear();
            v.resize(n, T::zero());
        };
        resize(&mut self.bw_da1, dh);
        resize(&mut self.bw_dz, 2 * d);
        resize(&mut self.bw_dhead, d);
        resize(&mut self.bw_dq, d);
        resize(&mut self.bw_dk, h * d);
        resize(&mut self.bw_dv, h * d);
        resize(&mut self.bw_dw, h);
        resize(&mut self.bw_dvec, d);
    }
}

/// One estimator forward pass over a history. Returns the per-scenario
/// probability vector in `cache.probs` (strictly positive, sums to 1).
///
/// With attention: per position the query is the item embedding and key =
/// value = the fused item+scenario embedding; the attention output at the
/// last real position, concatenated with `seq_final`, feeds the FC head.
/// Without attention (`use_attention == false`) the fused embeddings are
/// mean-pooled over real positions instead. Histories with no real
/// positions use a zero context vector.
#[allow(clippy::too_many_arguments)]
pub fn q_forward<T: Real>(
    params: &[T],
    lay: &QLayout,
    item_table: &[T],
    scenario_table: &[T],
    items: &[u32],
    scenarios: &[u32],
    padding_item: u32,
    seq_final: &[T],
    use_attention: bool,
    cache: &mut QCache<T>,
) {
    let d = lay.d;
    let h = items.len();
    let heads = lay.heads;
    let dk = d / heads;
    cache.ensure(h, d, heads, lay.dh, lay.num_scenarios);
    let QCache {
        fused,
        e_q,
        q_proj,
        k_proj,
        v_proj,
        attn,
        head_cat,
        attn_rep,
        z,
        a1,
        probs,
        last_real,
        n_real,
        logits,
        ..
    } = cache;

    for t in 0..h {
        if items[t] != padding_item {
            let e_i = &item_table[items[t] as usize * d..(items[t] as usize + 1) * d];
            let e_s =
                &scenario_table[scenarios[t] as usize * d..(scenarios[t] as usize + 1) * d];
            let f = &mut fused[t * d..(t + 1) * d];
            for c in 0..d {
                f[c] = e_i[c] + e_s[c];
            }
            *last_real = Some(t);
            *n_real += 1;
        }
    }

    if use_attention {
        if let Some(last) = *last_real {
            e_q.copy_from_slice(
                &item_table[items[last] as usize * d..(items[last] as usize + 1) * d],
            );
            vecmat_acc(e_q, &params[lay.wq.clone()], q_proj, d);
            for t in 0..h {
                if items[t] == padding_item {
                    continue;
                }
                vecmat_acc(
                    &fused[t * d..(t + 1) * d],
                    &params[lay.wk.clone()],
                    &mut k_proj[t * d..(t + 1) * d],
                    d,
                );
                vecmat_acc(
                    &fused[t * d..(t + 1) * d],
                    &params[lay.wv.clone()],
                    &mut v_proj[t * d..(t + 1) * d],
                    d,
                );
            }
            let scale = T::from_f64(1.0 / (dk as f64).sqrt());
            for head in 0..heads {
                let col = head * dk;
                let mut max_logit = T::neg_infinity();
                for t in 0..h {
                    if items[t] == padding_item {
                        continue;
                    }
                    let mut dot = T::zero();
                    for u in 0..dk {
                        dot += q_proj[col + u] * k_proj[t * d + col + u];
                    }
                    let l = dot * scale;
                    logits[t] = l;
                    if l > max_logit {
                        max_logit = l;
                    }
                }
                let mut denom = T::zero();
                for t in 0..h {
                    if items[t] == padding_item {
                        continue;
                    }
                    let e = (logits[t] - max_logit).exp();
                    attn[head * h + t] = e;
                    denom += e;
                }
                for t in 0..h {
                    if items[t] == padding_item {
                        continue;
                    }
                    attn[head * h + t] /= denom;
                    let w = attn[head * h + t];
                    for u in 0..dk {
                        head_cat[col + u] += w * v_proj[t * d + col + u];
                    }
                }
            }
            vecmat_acc(head_cat, &params[lay.wo.clone()], attn_rep, d);
        }
    } else if *n_real > 0 {
        // Mean-pooled fused embeddings over real positions.
        let inv = T::one() / T::from_f64(*n_real as f64);
        for t in 0..h {
            if items[t] == padding_item {
                continue;
            }
            for c in 0..d {
                attn_rep[c] += fused[t * d + c] * inv;
            }
        }
    }

    z[..d].copy_from_slice(attn_rep);
    z[d..].copy_from_slice(seq_final);
    a1.copy_from_slice(&params[lay.fc1_b.clone()]);
    vecmat_acc(z, &params[lay.fc1_w.clone()], a1, lay.dh);
    for v in a1.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    probs.copy_from_slice(&params[lay.fc2_b.clone()]);
    vecmat_acc(a1, &params[lay.fc2_w.clone()], probs, lay.num_scenarios);
    softmax_in_place(probs);
}

/// Backward through one estimator. `d_probs` is dL/d(probs), consumed.
/// Parameter gradients accumulate into `grads`; embedding-table gradients
/// accumulate into `grads` at `item_table_off`/`scenario_table_off`;
/// `d_seq_final` receives the gradient of the trunk input.
#[allow(clippy::too_many_arguments)]
pub fn q_backward<T: Real>(
    params: &[T],
    lay: &QLayout,
    cache: &mut QCache<T>,
    items: &[u32],
    scenarios: &[u32],
    padding_item: u32,
    use_attention: bool,
    d_probs: &mut [T],
    grads: &mut [T],
    item_table_off: usize,
    scenario_table_off: usize,
    d_seq_final: &mut [T],
) {
    let d = lay.d;
    let h = items.len();
    let heads = lay.heads;
    let dk = d / heads;
    cache.ensure_backward(h, d, lay.dh);
    let QCache {
        fused,
        e_q,
        q_proj,
        k_proj,
        v_proj,
        attn,
        head_cat,
        z,
        a1,
        probs,
        last_real,
        n_real,
        bw_da1,
        bw_dz,
        bw_dhead,
        bw_dq,
        bw_dk,
        bw_dv,
        bw_dw,
        bw_dvec,
        ..
    } = cache;

    softmax_backward_in_place(probs, d_probs);
    for s in 0..lay.num_scenarios {
        grads[lay.fc2_b.start + s] += d_probs[s];
    }
    vecmat_backward(
        params,
        &lay.fc2_w,
        a1,
        d_probs,
        grads,
        bw_da1,
        lay.num_scenarios,
    );
    for (g, a) in bw_da1.iter_mut().zip(a1.iter()) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
    for u in 0..lay.dh {
        grads[lay.fc1_b.start + u] += bw_da1[u];
    }
    vecmat_backward(params, &lay.fc1_w, z, bw_da1, grads, bw_dz, lay.dh);
    for c in 0..d {
        d_seq_final[c] += bw_dz[d + c];
    }
    let d_rep = &bw_dz[..d];

    if use_attention {
        if last_real.is_none() {
            return;
        }
        vecmat_backward(params, &lay.wo, head_cat, d_rep, grads, bw_dhead, d);
        let scale = T::from_f64(1.0 / (dk as f64).sqrt());
        for head in 0..heads {
            let col = head * dk;
            for t in 0..h {
                if items[t] == padding_item {
                    continue;
                }
                let w = attn[head * h + t];
                let mut acc = T::zero();
                for u in 0..dk {
                    acc += bw_dhead[col + u] * v_proj[t * d + col + u];
                    bw_dv[t * d + col + u] += w * bw_dhead[col + u];
                }
                bw_dw[t] = acc;
            }
            let mut inner = T::zero();
            for t in 0..h {
                if items[t] == padding_item {
                    continue;
                }
                inner += attn[head * h + t] * bw_dw[t];
            }
            for t in 0..h {
                if items[t] == padding_item {
                    continue;
                }
                let d_logit = attn[head * h + t] * (bw_dw[t] - inner) * scale;
                for u in 0..dk {
                    bw_dq[col + u] += d_logit * k_proj[t * d + col + u];
                    bw_dk[t * d + col + u] += d_logit * q_proj[col + u];
                }
            }
        }
        bw_dvec.iter_mut().for_each(|v| *v = T::zero());
        vecmat_backward(params, &lay.wq, e_q, bw_dq, grads, bw_dvec, d);
        let last = last_real.unwrap();
        let q_item = items[last] as usize;
        for c in 0..d {
            grads[item_table_off + q_item * d + c] += bw_dvec[c];
        }
        for t in 0..h {
            if items[t] == padding_item {
                continue;
            }
            bw_dvec.iter_mut().for_each(|v| *v = T::zero());
            let fused_row = &fused[t * d..(t + 1) * d];
            vecmat_backward(
                params,
                &lay.wk,
                fused_row,
                &bw_dk[t * d..(t + 1) * d],
                grads,
                bw_dvec,
                d,
            );
            vecmat_backward(
                params,
                &lay.wv,
                fused_row,
                &bw_dv[t * d..(t + 1) * d],
                grads,
                bw_dvec,
                d,
            );
            let item = items[t] as usize;
            let scen = scenarios[t] as usize;
            for c in 0..d {
                grads[item_table_off + item * d + c] += bw_dvec[c];
                grads[scenario_table_off + scen * d + c] += bw_dvec[c];
            }
        }
    } else if *n_real > 0 {
        let inv = T::one() / T::from_f64(*n_real as f64);
        for t in 0..h {
            if items[t] == padding_item {
                continue;
            }
            let item = items[t] as usize;
            let scen = scenarios[t] as usize;
            for c in 0..d {
                let g = d_rep[c] * inv;
                grads[item_table_off + item * d + c] += g;
                grads[scenario_table_off + scen * d + c] += g;
            }
        }
    }
}

/// Index of the maximum entry; ties resolve to the lowest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    let mut best_val = v[0];
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > best_val {
            best_val = *x;
            best = i;
        }
    }
    best
}

/// Double Q-learning regression target: `clamp(r + gamma * bootstrap, 0, 1)`.
/// The clamp keeps targets inside the softmax codomain of the estimators.
pub fn q_target<T: Real>(reward_norm: T, gamma: T, bootstrap: T) -> T {
    let raw = reward_norm + gamma * bootstrap;
    raw.max(T::zero()).min(T::one())
}

/// Confidence gate `min(1 / (1 - p + eps), cap)`. No gradient flows through
/// the gate input; callers treat the result as a constant.
pub fn gate<T: Real>(next_scenario_prob: T, epsilon: T, cap: T) -> T {
    let raw = T::one() / (T::one() - next_scenario_prob + epsilon);
    raw.min(cap)
}

/// Per-sample estimator evaluations feeding one Double Q-learning step.
#[derive(Debug, Clone)]
pub struct QStepSample<T> {
    pub qa_state: Vec<T>,
    pub qb_state: Vec<T>,
    pub qa_next: Vec<T>,
    pub qb_next: Vec<T>,
    pub logged_scenario: usize,
    pub reward_norm: T,
}

#[derive(Debug, Clone)]
pub struct QStepOutcome<T> {
    /// Mean squared error between the chosen estimator and its target.
    pub q_loss: T,
    pub targets: Vec<T>,
    /// `Q_chosen(s, a_logged) - target` per sample.
    pub errors: Vec<T>,
    /// Detached gate input: mean of the two estimators at the logged
    /// scenario.
    pub gate_probs: Vec<T>,
}

/// Value-level Double Q-learning step over a batch. The coin picks which
/// estimator regresses onto the stopped-gradient target; the other only
/// supplies the bootstrap value.
pub fn double_q_step<T: Real>(samples: &[QStepSample<T>], gamma: T, coin: Coin) -> QStepOutcome<T> {
    let mut targets = Vec::with_capacity(samples.len());
    let mut errors = Vec::with_capacity(samples.len());
    let mut gate_probs = Vec::with_capacity(samples.len());
    let mut loss = T::zero();
    let half = T::from_f64(0.5);
    for s in samples {
        let (chosen_state, bootstrap) = match coin {
            Coin::A => {
                let a_star = argmax(&s.qa_next);
                (&s.qa_state, s.qb_next[a_star])
            }
            Coin::B => {
                let b_star = argmax(&s.qb_next);
                (&s.qb_state, s.qa_next[b_star])
            }
        };
        let target = q_target(s.reward_norm, gamma, bootstrap);
        let err = chosen_state[s.logged_scenario] - target;
        loss += err * err;
        targets.push(target);
        errors.push(err);
        gate_probs.push(half * (s.qa_state[s.logged_scenario] + s.qb_state[s.logged_scenario]));
    }
    let n = T::from_f64(samples.len() as f64);
    QStepOutcome {
        q_loss: loss / n,
        targets,
        errors,
        gate_probs,
    }
}

/// Exact tabular Double Q-learning state: one table per estimator plus
/// per-cell visit counts driving the learning-rate schedule
/// `alpha(s,a) = lr / n(s,a)^visit_power` (`visit_power = 0` keeps a
/// constant rate).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub num_states: usize,
    pub num_actions: usize,
    pub table: Vec<f64>,
    pub visits: Vec<u64>,
    pub visit_power: f64,
}

impl TabularQ {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        TabularQ {
            num_states,
            num_actions,
            table: vec![0.0; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
            visit_power: 0.0,
        }
    }

    pub fn with_visit_power(mut self, power: f64) -> Self {
        self.visit_power = power;
        self
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    pub fn best_action(&self, s: usize) -> usize {
        let row = &self.table[s * self.num_actions..(s + 1) * self.num_actions];
        let mut best = 0;
        for (i, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// One tabular Double Q-learning update. Exactly one cell of one table
/// changes.
pub fn tabular_double_q_update(
    qa: &mut TabularQ,
    qb: &mut TabularQ,
    t: &Transition,
    lr: f64,
    gamma: f64,
    coin: Coin,
) -> Result<()> {
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(Error::Config(
            "tabular learning rate must be in (0, 1]".into(),
        ));
    }
    let check = |q: &TabularQ| -> Result<()> {
        if t.s >= q.num_states || t.s_next >= q.num_states || t.a >= q.num_actions {
            return Err(Error::Index(format!(
                "transition ({}, {}, {}) out of bounds for {}x{} table",
                t.s, t.a, t.s_next, q.num_states, q.num_actions
            )));
        }
        Ok(())
    };
    check(qa)?;
    check(qb)?;
    let (updated, other) = match coin {
        Coin::A => (qa, qb),
        Coin::B => (qb, qa),
    };
    let star = updated.best_action(t.s_next);
    let bootstrap = other.q(t.s_next, star);
    let idx = t.s * updated.num_actions + t.a;
    let n = updated.visits[idx] + 1;
    let alpha = if updated.visit_power == 0.0 {
        lr
    } else {
        lr / (n as f64).powf(updated.visit_power)
    };
    updated.table[idx] += alpha * (t.r + gamma * bootstrap - updated.table[idx]);
    updated.visits[idx] = n;
    Ok(())
}
