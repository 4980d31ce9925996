//! The combined training objective
//! `loss = q_loss + mean(gate_i * triplet_i)` with its ablations, computed
//! per batch with hand-rolled backprop.
//!
//! Stop-gradient semantics: the Double Q-learning target and the gate value
//! are *detached* — they contribute values, never gradients. The
//! finite-difference harness freezes them via [`BatchCtx::frozen`] so the
//! numeric and analytic gradients see the same function.

use crate::data::{Catalog, SequenceSample, MAX_REWARD};
use crate::encoder::{encoder_backward, gru_forward, nextitnet_forward, EncoderCache, EncoderLayout};
use crate::error::Result;
use crate::intent::{intent_backward, intent_forward, sample_negatives, triplet_backward, triplet_loss, IntentCache};
use crate::math::Real;
use crate::model::Model;
use crate::qnet::{argmax, gate, q_backward, q_forward, q_target, Coin, QCache};
use crate::rng::stream;
use crate::TrainConfig;

/// Ablation switches (a copy of the config flags).
#[derive(Debug, Clone, Copy, Default)]
pub struct Ablation {
    pub no_mha: bool,
    pub no_gate: bool,
    pub no_suim: bool,
}

impl Ablation {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Ablation {
            no_mha: cfg.no_mha,
            no_gate: cfg.no_gate,
            no_suim: cfg.no_suim,
        }
    }
}

/// Loss hyperparameters (a copy of the config values).
#[derive(Debug, Clone, Copy)]
pub struct LossHyper {
    pub gamma: f64,
    pub margin: f64,
    pub epsilon: f64,
    pub gate_cap: f64,
    pub k_negatives: usize,
    pub strict_relu: bool,
}

impl LossHyper {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        LossHyper {
            gamma: cfg.gamma,
            margin: cfg.margin,
            epsilon: cfg.epsilon,
            gate_cap: cfg.gate_cap,
            k_negatives: cfg.k_negatives,
            strict_relu: cfg.strict_relu,
        }
    }
}

/// Which part of the objective to differentiate. `Full` is training;
/// the restricted modes exist for gradient-isolation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Full,
    QOnly,
    GatedTripletOnly,
}

/// Detached values for one sample, captured once and held fixed while the
/// finite-difference harness perturbs parameters.
#[derive(Debug, Clone, Copy)]
pub struct FrozenSample {
    pub target: f64,
    pub gate: f64,
}

/// Per-batch sampling context: the estimator coin, the negative draws, and
/// (for gradient checking) frozen detached values.
#[derive(Debug, Clone)]
pub struct BatchCtx {
    pub coin: Coin,
    pub negatives: Vec<Vec<u32>>,
    pub frozen: Option<Vec<FrozenSample>>,
}

/// Draw the per-sample negatives from streams keyed by
/// (seed, epoch, step, slot); deterministic under any parallel schedule.
pub fn build_batch_ctx(
    catalog: &Catalog,
    batch: &[&SequenceSample],
    k_negatives: usize,
    coin: Coin,
    seed: u64,
    epoch: u64,
    step: u64,
) -> Result<BatchCtx> {
    let mut negatives = Vec::with_capacity(batch.len());
    for (slot, sample) in batch.iter().enumerate() {
        let mut rng = stream(seed, "negatives", &[epoch, step, slot as u64]);
        negatives.push(sample_negatives(
            catalog,
            &sample.history_items,
            sample.target_item,
            k_negatives,
            &mut rng,
        )?);
    }
    Ok(BatchCtx {
        coin,
        negatives,
        frozen: None,
    })
}

/// Per-sample loss contributions, accumulated in f64 for stable logging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub q_loss: f64,
    pub triplet: f64,
    pub gated_triplet: f64,
    pub n: usize,
}

/// Reusable per-thread buffers.
#[derive(Debug)]
pub struct Workspace<T> {
    enc_s: EncoderCache<T>,
    enc_next: EncoderCache<T>,
    q_a: QCache<T>,
    q_b: QCache<T>,
    q_next_a: QCache<T>,
    q_next_b: QCache<T>,
    intent: IntentCache<T>,
    gather: Vec<T>,
    gather_next: Vec<T>,
    d_enc_out: Vec<T>,
    d_input: Vec<T>,
    d_seq_final: Vec<T>,
    d_probs: Vec<T>,
    d_anchor: Vec<T>,
    d_positive: Vec<T>,
    d_negatives: Vec<Vec<T>>,
}

impl<T> Default for Workspace<T> {
    fn default() -> Self {
        Workspace {
            enc_s: EncoderCache::default(),
            enc_next: EncoderCache::default(),
            q_a: QCache::default(),
            q_b: QCache::default(),
            q_next_a: QCache::default(),
            q_next_b: QCache::default(),
            intent: IntentCache::default(),
            gather: Vec::new(),
            gather_next: Vec::new(),
            d_enc_out: Vec::new(),
            d_input: Vec::new(),
            d_seq_final: Vec::new(),
            d_probs: Vec::new(),
            d_anchor: Vec::new(),
            d_positive: Vec::new(),
            d_negatives: Vec::new(),
        }
    }
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, h: usize, d: usize, s: usize, k: usize) {
        let resize = |v: &mut Vec<T>, n: usize| {
            if v.len() != n {
                v.clear();
                v.resize(n, T::zero());
            }
        };
        resize(&mut self.gather, h * d);
        resize(&mut self.gather_next, h * d);
        resize(&mut self.d_enc_out, h * d);
        resize(&mut self.d_input, h * d);
        resize(&mut self.d_seq_final, d);
        resize(&mut self.d_probs, s);
        resize(&mut self.d_anchor, d);
        resize(&mut self.d_positive, d);
        self.d_negatives.resize_with(k, Vec::new);
        for buf in self.d_negatives.iter_mut() {
            resize(buf, d);
        }
    }
}

/// Copy embedding rows for a history window, zeroing padded positions.
fn gather_history<T: Real>(item_table: &[T], d: usize, items: &[u32], pad: u32, out: &mut [T]) {
    for (t, &id) in items.iter().enumerate() {
        let row = &mut out[t * d..(t + 1) * d];
        if id == pad {
            row.fill(T::zero());
        } else {
            row.copy_from_slice(&item_table[id as usize * d..(id as usize + 1) * d]);
        }
    }
}

fn encode_into<T: Real>(model: &Model<T>, input: &[T], h: usize, cache: &mut EncoderCache<T>) {
    match &model.layout.encoder {
        EncoderLayout::NextItNet(lay) => nextitnet_forward(&model.params, lay, input, h, cache),
        EncoderLayout::Gru(lay) => gru_forward(&model.params, lay, input, h, cache),
    }
}

/// Forward (and optionally backward) pass over a batch.
///
/// When `grads` is `Some`, parameter gradients of the `mode`-selected part
/// of the objective accumulate into it (scaled by 1/batch for the means).
/// When `capture` is `Some`, the per-sample detached values (target, gate)
/// are written there — this is how the gradient checker freezes them.
#[allow(clippy::too_many_arguments)]
pub fn batch_pass<T: Real>(
    model: &Model<T>,
    batch: &[&SequenceSample],
    coin: Coin,
    negatives: &[Vec<u32>],
    frozen: Option<&[FrozenSample]>,
    hyper: &LossHyper,
    abl: Ablation,
    mode: LossMode,
    denom: usize,
    mut grads: Option<&mut [T]>,
    capture: Option<&mut Vec<FrozenSample>>,
    ws: &mut Workspace<T>,
) -> Result<LossParts> {
    debug_assert_eq!(batch.len(), negatives.len());
    let d = model.dims.d;
    let h = model.dims.history_len;
    let s = model.dims.num_scenarios as usize;
    let pad = model.padding_item();
    let use_attention = !abl.no_mha;
    let inv_b = 1.0 / denom as f64;
    let mut capture = capture;
    if let Some(c) = capture.as_deref_mut() {
        c.clear();
    }

    let mut q_sum = 0.0;
    let mut triplet_sum = 0.0;
    let mut gated_sum = 0.0;

    ws.ensure(h, d, s, hyper.k_negatives);

    for (i, sample) in batch.iter().enumerate() {
        // Encoder on the current state.
        gather_history(model.item_table(), d, &sample.history_items, pad, &mut ws.gather);
        encode_into(model, &ws.gather, h, &mut ws.enc_s);
        let seq_final_off = (h - 1) * d;

        // Scenario-confidence side.
        let mut gate_val = 1.0;
        let mut q_err = T::zero();
        if !abl.no_suim {
            let frozen_i = frozen.map(|f| f[i]);
            let need_gate_value = !abl.no_gate || capture.is_some();
            let need_a_state = coin == Coin::A || need_gate_value;
            let need_b_state = coin == Coin::B || need_gate_value;
            if need_a_state {
                let seq_final = &ws.enc_s.out[seq_final_off..seq_final_off + d];
                q_forward(
                    &model.params,
                    &model.layout.q_a,
                    model.item_table(),
                    model.scenario_table(),
                    &sample.history_items,
                    &sample.history_scenarios,
                    pad,
                    seq_final,
                    use_attention,
                    &mut ws.q_a,
                );
            }
            if need_b_state {
                let seq_final = &ws.enc_s.out[seq_final_off..seq_final_off + d];
                q_forward(
                    &model.params,
                    &model.layout.q_b,
                    model.item_table(),
                    model.scenario_table(),
                    &sample.history_items,
                    &sample.history_scenarios,
                    pad,
                    seq_final,
                    use_attention,
                    &mut ws.q_b,
                );
            }
            let a_logged = sample.target_scenario as usize;
            let (target, gate_raw) = match frozen_i {
                Some(f) => (f.target, f.gate),
                None => {
                    // Successor state, value-only: no gradient through the
                    // bootstrap.
                    gather_history(
                        model.item_table(),
                        d,
                        &sample.next_history_items,
                        pad,
                        &mut ws.gather_next,
                    );
                    encode_into(model, &ws.gather_next, h, &mut ws.enc_next);
                    let next_final = &ws.enc_next.out[seq_final_off..seq_final_off + d];
                    q_forward(
                        &model.params,
                        &model.layout.q_a,
                        model.item_table(),
                        model.scenario_table(),
                        &sample.next_history_items,
                        &sample.next_history_scenarios,
                        pad,
                        next_final,
                        use_attention,
                        &mut ws.q_next_a,
                    );
                    q_forward(
                        &model.params,
                        &model.layout.q_b,
                        model.item_table(),
                        model.scenario_table(),
                        &sample.next_history_items,
                        &sample.next_history_scenarios,
                        pad,
                        next_final,
                        use_attention,
                        &mut ws.q_next_b,
                    );
                    let bootstrap = match coin {
                        Coin::A => ws.q_next_b.probs[argmax(&ws.q_next_a.probs)],
                        Coin::B => ws.q_next_a.probs[argmax(&ws.q_next_b.probs)],
                    };
                    let r_norm = sample.reward / MAX_REWARD;
                    let target = q_target(r_norm, hyper.gamma, bootstrap.into_f64());
                    let gate_raw = if need_gate_value {
                        let p = 0.5
                            * (ws.q_a.probs[a_logged].into_f64()
                                + ws.q_b.probs[a_logged].into_f64());
                        gate(p, hyper.epsilon, hyper.gate_cap)
                    } else {
                        1.0
                    };
                    (target, gate_raw)
                }
            };
            if let Some(c) = capture.as_deref_mut() {
                c.push(FrozenSample {
                    target,
                    gate: gate_raw,
                });
            }
            if !abl.no_gate {
                gate_val = gate_raw;
            }
            let chosen_probs = match coin {
                Coin::A => &ws.q_a.probs,
                Coin::B => &ws.q_b.probs,
            };
            q_err = chosen_probs[a_logged] - T::from_f64(target);
            q_sum += q_err.into_f64() * q_err.into_f64();
        } else if let Some(c) = capture.as_deref_mut() {
            c.push(FrozenSample {
                target: 0.0,
                gate: 1.0,
            });
        }

        // Intent side.
        let seq_final = &ws.enc_s.out[seq_final_off..seq_final_off + d];
        intent_forward(
            &model.params,
            &model.layout.intent,
            seq_final,
            hyper.strict_relu,
            &mut ws.intent,
        );
        let anchor = &ws.intent.a[2];
        let positive = model.item_row(sample.target_item);
        let neg_rows: Vec<&[T]> = negatives[i]
            .iter()
            .map(|&id| model.item_row(id))
            .collect();
        let margin = T::from_f64(hyper.margin);
        let triplet = triplet_loss(anchor, positive, &neg_rows, margin)?.into_f64();
        triplet_sum += triplet;
        gated_sum += gate_val * triplet;

        // Backward.
        if let Some(g) = grads.as_deref_mut() {
            let q_active = !abl.no_suim && mode != LossMode::GatedTripletOnly;
            let triplet_active = mode != LossMode::QOnly;
            ws.d_seq_final.iter_mut().for_each(|v| *v = T::zero());
            if q_active {
                // d q_loss / d Q_chosen(s, a) = 2 err / B
                ws.d_probs.iter_mut().for_each(|v| *v = T::zero());
                ws.d_probs[sample.target_scenario as usize] =
                    T::from_f64(2.0 * inv_b) * q_err;
                let (q_layout, q_cache) = match coin {
                    Coin::A => (&model.layout.q_a, &mut ws.q_a),
                    Coin::B => (&model.layout.q_b, &mut ws.q_b),
                };
                q_backward(
                    &model.params,
                    q_layout,
                    q_cache,
                    &sample.history_items,
                    &sample.history_scenarios,
                    pad,
                    use_attention,
                    &mut ws.d_probs,
                    g,
                    model.layout.emb_item.start,
                    model.layout.emb_scenario.start,
                    &mut ws.d_seq_final,
                );
            }
            if triplet_active {
                let scale = T::from_f64(gate_val * inv_b);
                ws.d_anchor.iter_mut().for_each(|v| *v = T::zero());
                ws.d_positive.iter_mut().for_each(|v| *v = T::zero());
                for buf in ws.d_negatives.iter_mut() {
                    buf.iter_mut().for_each(|v| *v = T::zero());
                }
                triplet_backward(
                    anchor,
                    positive,
                    &neg_rows,
                    margin,
                    scale,
                    &mut ws.d_anchor,
                    &mut ws.d_positive,
                    &mut ws.d_negatives,
                );
                let item_off = model.layout.emb_item.start;
                let pos_base = item_off + sample.target_item as usize * d;
                for c in 0..d {
                    g[pos_base + c] += ws.d_positive[c];
                }
                for (ni, &nid) in negatives[i].iter().enumerate() {
                    let base = item_off + nid as usize * d;
                    for c in 0..d {
                        g[base + c] += ws.d_negatives[ni][c];
                    }
                }
                intent_backward(
                    &model.params,
                    &model.layout.intent,
                    &mut ws.intent,
                    hyper.strict_relu,
                    &ws.d_anchor,
                    g,
                    &mut ws.d_seq_final,
                );
            }
            // Trunk backward: the only encoder output consumed downstream
            // is the final position's representation.
            ws.d_enc_out.iter_mut().for_each(|v| *v = T::zero());
            ws.d_enc_out[seq_final_off..seq_final_off + d].copy_from_slice(&ws.d_seq_final);
            ws.d_input.iter_mut().for_each(|v| *v = T::zero());
            encoder_backward(
                &model.params,
                &model.layout.encoder,
                &mut ws.enc_s,
                h,
                &mut ws.d_enc_out,
                g,
                &mut ws.d_input,
            );
            // Scatter input gradients back onto the item table (real
            // positions only: padded rows were zeroed, so the padding row
            // never receives gradient).
            let item_off = model.layout.emb_item.start;
            for (t, &id) in sample.history_items.iter().enumerate() {
                if id == pad {
                    continue;
                }
                let base = item_off + id as usize * d;
                for c in 0..d {
                    g[base + c] += ws.d_input[t * d + c];
                }
            }
        }
    }

    let n = batch.len();
    let q_loss = if abl.no_suim { 0.0 } else { q_sum * inv_b };
    let triplet = triplet_sum * inv_b;
    let gated_triplet = if abl.no_suim {
        triplet
    } else {
        gated_sum * inv_b
    };
    let total = match mode {
        LossMode::Full => {
            if abl.no_suim {
                triplet
            } else {
                q_loss + gated_triplet
            }
        }
        LossMode::QOnly => q_loss,
        LossMode::GatedTripletOnly => gated_triplet,
    };
    Ok(LossParts {
        total,
        q_loss,
        triplet,
        gated_triplet,
        n,
    })
}

/// Drive [`batch_pass`] over a whole batch with its context and
/// mean-over-batch scaling.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<T: Real>(
    model: &Model<T>,
    batch: &[&SequenceSample],
    ctx: &BatchCtx,
    hyper: &LossHyper,
    abl: Ablation,
    mode: LossMode,
    grads: Option<&mut [T]>,
    capture: Option<&mut Vec<FrozenSample>>,
    ws: &mut Workspace<T>,
) -> Result<LossParts> {
    batch_pass(
        model,
        batch,
        ctx.coin,
        &ctx.negatives,
        ctx.frozen.as_deref(),
        hyper,
        abl,
        mode,
        batch.len(),
        grads,
        capture,
        ws,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_sequences;
    use crate::encoder::EncoderKind;
    use crate::model::ModelDims;
    use crate::synth::{generate, SynthConfig};

    fn tiny_setup() -> (Model<f64>, Catalog, Vec<SequenceSample>) {
        let synth = SynthConfig {
            num_users: 4,
            num_items: 20,
            num_scenarios: 3,
            num_topics: 4,
            events_per_user: 12,
            shift_probability: 0.2,
            scenario_affinity_concentration: 1.0,
            seed: 5,
        };
        let records = generate(&synth).unwrap();
        let catalog = Catalog::new(20, 3).unwrap();
        let samples = build_sequences(&records, 5, &catalog).unwrap();
        let dims = ModelDims {
            d: 8,
            history_len: 5,
            heads: 4,
            num_items: 20,
            num_scenarios: 3,
            encoder: EncoderKind::NextItNet,
            kernel_width: 3,
            dilations: vec![1, 2],
            strict_relu: false,
        };
        let model = Model::init(dims, 11).unwrap();
        (model, catalog, samples)
    }

    fn hyper() -> LossHyper {
        LossHyper {
            gamma: 0.5,
            margin: 1.0,
            epsilon: 1e-6,
            gate_cap: 100.0,
            k_negatives: 4,
            strict_relu: false,
        }
    }

    #[test]
    fn no_suim_total_is_exactly_the_mean_triplet() {
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(6).collect();
        let ctx = build_batch_ctx(&catalog, &batch, 4, Coin::A, 1, 0, 0).unwrap();
        let mut ws = Workspace::new();
        let abl = Ablation {
            no_suim: true,
            ..Default::default()
        };
        let parts = batch_loss(
            &model, &batch, &ctx, &hyper(), abl, LossMode::Full, None, None, &mut ws,
        )
        .unwrap();
        assert_eq!(parts.total, parts.triplet);
        assert_eq!(parts.q_loss, 0.0);
    }

    #[test]
    fn no_gate_total_is_q_loss_plus_mean_triplet() {
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(6).collect();
        let ctx = build_batch_ctx(&catalog, &batch, 4, Coin::B, 1, 0, 0).unwrap();
        let mut ws = Workspace::new();
        let abl = Ablation {
            no_gate: true,
            ..Default::default()
        };
        let parts = batch_loss(
            &model, &batch, &ctx, &hyper(), abl, LossMode::Full, None, None, &mut ws,
        )
        .unwrap();
        assert!((parts.total - (parts.q_loss + parts.triplet)).abs() < 1e-12);
        assert_eq!(parts.gated_triplet, parts.triplet);
    }

    #[test]
    fn gate_probs_of_one_half_double_the_triplet_term() {
        // With every gate frozen at p = 0.5 the gated mean is twice the
        // plain mean (up to the epsilon in the gate denominator).
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(5).collect();
        let mut ctx = build_batch_ctx(&catalog, &batch, 4, Coin::A, 2, 0, 0).unwrap();
        let g = gate(0.5, 1e-6, 100.0);
        ctx.frozen = Some(vec![
            FrozenSample {
                target: 0.4,
                gate: g
            };
            batch.len()
        ]);
        let mut ws = Workspace::new();
        let parts = batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::Full,
            None,
            None,
            &mut ws,
        )
        .unwrap();
        let ratio = parts.gated_triplet / parts.triplet;
        assert!((ratio - 2.0).abs() < 1e-4, "ratio {ratio}");
    }

    #[test]
    fn capture_then_freeze_reproduces_the_loss() {
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(6).collect();
        let mut ctx = build_batch_ctx(&catalog, &batch, 4, Coin::A, 3, 0, 0).unwrap();
        let mut ws = Workspace::new();
        let mut captured = Vec::new();
        let live = batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::Full,
            None,
            Some(&mut captured),
            &mut ws,
        )
        .unwrap();
        ctx.frozen = Some(captured);
        let frozen = batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::Full,
            None,
            None,
            &mut ws,
        )
        .unwrap();
        assert_eq!(live, frozen);
    }

    #[test]
    fn only_touched_embedding_rows_receive_gradient() {
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(4).collect();
        let ctx = build_batch_ctx(&catalog, &batch, 4, Coin::A, 8, 0, 0).unwrap();
        let mut ws = Workspace::new();
        let mut grads = vec![0.0f64; model.layout.total];
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::Full,
            Some(&mut grads),
            None,
            &mut ws,
        )
        .unwrap();
        let mut touched = std::collections::HashSet::new();
        for (i, s) in batch.iter().enumerate() {
            for &id in &s.history_items {
                if id != catalog.padding_item_id() {
                    touched.insert(id);
                }
            }
            touched.insert(s.target_item);
            for &id in &ctx.negatives[i] {
                touched.insert(id);
            }
        }
        let d = model.dims.d;
        let item_off = model.layout.emb_item.start;
        for id in 0..=model.dims.num_items {
            let row = &grads[item_off + id as usize * d..item_off + (id as usize + 1) * d];
            let nonzero = row.iter().any(|&g| g != 0.0);
            if touched.contains(&id) {
                // Touched rows may still have zero gradient (inactive
                // hinges), but untouched rows must be exactly zero.
                continue;
            }
            assert!(!nonzero, "untouched item row {id} received gradient");
        }
        // The padding row in particular never receives gradient.
        let pad = catalog.padding_item_id() as usize;
        let pad_row = &grads[item_off + pad * d..item_off + (pad + 1) * d];
        assert!(pad_row.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gated_term_contributes_zero_gradient_to_q_parameters() {
        let (model, catalog, samples) = tiny_setup();
        let batch: Vec<&SequenceSample> = samples.iter().take(6).collect();
        let ctx = build_batch_ctx(&catalog, &batch, 4, Coin::A, 4, 0, 0).unwrap();
        let mut ws = Workspace::new();
        let mut grads = vec![0.0f64; model.layout.total];
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::GatedTripletOnly,
            Some(&mut grads),
            None,
            &mut ws,
        )
        .unwrap();
        let q_ranges = [
            model.layout.q_a.wq.start..model.layout.q_a.fc2_b.end,
            model.layout.q_b.wq.start..model.layout.q_b.fc2_b.end,
        ];
        for r in q_ranges {
            assert!(grads[r].iter().all(|&g| g == 0.0));
        }
        // And symmetrically the q-only loss leaves the intent head alone.
        let mut grads_q = vec![0.0f64; model.layout.total];
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper(),
            Ablation::default(),
            LossMode::QOnly,
            Some(&mut grads_q),
            None,
            &mut ws,
        )
        .unwrap();
        let intent_range = model.layout.intent.w[0].start..model.layout.intent.b[2].end;
        assert!(grads_q[intent_range].iter().all(|&g| g == 0.0));
    }
}
