//! Training loop: joint optimization of the Double Q-learning loss and the
//! gated triplet loss with an adaptive-moment optimizer, deterministic
//! shuffling/coin/negative streams, epoch logging and NaN aborts.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{Catalog, SequenceSample};
use crate::error::{Error, Result};
use crate::eval;
use crate::loss::{batch_pass, build_batch_ctx, Ablation, LossHyper, LossMode, LossParts, Workspace};
use crate::math::Real;
use crate::model::{Model, ModelDims};
use crate::qnet::Coin;
use crate::rng::stream;

/// First-order adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Real>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = crate::math::l2_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let scale = T::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub q_loss: f64,
    pub triplet_loss: f64,
    pub gated_loss: f64,
    pub total: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_ndcg10: Option<f64>,
}

impl EpochLog {
    /// The deterministic fields (everything except wall time).
    pub fn deterministic_view(&self) -> (u32, f64, f64, f64, f64, Option<f64>) {
        (
            self.epoch,
            self.q_loss,
            self.triplet_loss,
            self.gated_loss,
            self.total,
            self.val_ndcg10,
        )
    }
}

pub fn write_epoch_logs(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for log in logs {
        let line = serde_json::to_string(log).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mutable training state; checkpoints capture and restore it bitwise.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    /// Epochs completed so far.
    pub epoch: u32,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub logs: Vec<EpochLog>,
}

/// Fixed chunk count for batch-parallel gradient accumulation. Chunk
/// boundaries and the reduction order are independent of the thread count,
/// so results are bitwise reproducible under any parallelism.
const GRAD_CHUNKS: usize = 8;

struct Slot {
    grads: Vec<f32>,
    ws: Workspace<f32>,
    parts: LossParts,
    err: Option<Error>,
}

/// Train a fresh model for `config.epochs` epochs.
pub fn train(
    samples: &[SequenceSample],
    catalog: &Catalog,
    config: &TrainConfig,
    validation: Option<&[SequenceSample]>,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let dims = ModelDims::from_config(config, catalog)?;
    let model = Model::<f32>::init(dims, config.seed)?;
    let adam = Adam::new(model.layout.total);
    let state = TrainState {
        model,
        adam,
        epoch: 0,
    };
    run_epochs(state, samples, catalog, config, validation)
}

/// Continue training from a restored state up to `config.epochs`.
pub fn resume(
    state: TrainState,
    samples: &[SequenceSample],
    catalog: &Catalog,
    config: &TrainConfig,
    validation: Option<&[SequenceSample]>,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let expected = ModelDims::from_config(config, catalog)?;
    if expected != state.model.dims {
        return Err(Error::Config(
            "checkpoint dimensions do not match config/data".into(),
        ));
    }
    run_epochs(state, samples, catalog, config, validation)
}

fn run_epochs(
    mut state: TrainState,
    samples: &[SequenceSample],
    catalog: &Catalog,
    config: &TrainConfig,
    validation: Option<&[SequenceSample]>,
) -> Result<TrainOutcome> {
    let hyper = LossHyper::from_config(config);
    let abl = Ablation::from_config(config);
    let n = samples.len();
    let total_params = state.model.layout.total;
    let mut indices: Vec<u32> = (0..n as u32).collect();
    let mut master_grads = vec![0.0f32; total_params];
    let mut slots: Vec<Slot> = (0..GRAD_CHUNKS)
        .map(|_| Slot {
            grads: vec![0.0f32; total_params],
            ws: Workspace::new(),
            parts: LossParts::default(),
            err: None,
        })
        .collect();
    let mut logs = Vec::new();

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let start = Instant::now();
        // The permutation must be a pure function of the epoch so that a
        // resumed run replays the exact batch composition.
        for (i, v) in indices.iter_mut().enumerate() {
            *v = i as u32;
        }
        let mut shuffle_rng = stream(config.seed, "shuffle", &[epoch as u64]);
        indices.shuffle(&mut shuffle_rng);
        let mut coin_rng = stream(config.seed, "coin", &[epoch as u64]);

        let mut sums = LossParts::default();
        let mut weighted = (0.0, 0.0, 0.0, 0.0);
        for (step, batch_idx) in indices.chunks(config.batch_size).enumerate() {
            let coin = if coin_rng.random_bool(0.5) {
                Coin::A
            } else {
                Coin::B
            };
            let batch: Vec<&SequenceSample> =
                batch_idx.iter().map(|&i| &samples[i as usize]).collect();
            let ctx = build_batch_ctx(
                catalog,
                &batch,
                config.k_negatives,
                coin,
                config.seed,
                epoch as u64,
                step as u64,
            )?;
            let b = batch.len();
            let chunk_size = b.div_ceil(GRAD_CHUNKS);
            slots.par_iter_mut().enumerate().for_each(|(c, slot)| {
                slot.grads.fill(0.0);
                slot.parts = LossParts::default();
                slot.err = None;
                let lo = c * chunk_size;
                if lo >= b {
                    return;
                }
                let hi = (lo + chunk_size).min(b);
                match batch_pass(
                    &state.model,
                    &batch[lo..hi],
                    coin,
                    &ctx.negatives[lo..hi],
                    None,
                    &hyper,
                    abl,
                    LossMode::Full,
                    b,
                    Some(&mut slot.grads),
                    None,
                    &mut slot.ws,
                ) {
                    Ok(parts) => slot.parts = parts,
                    Err(e) => slot.err = Some(e),
                }
            });
            master_grads.fill(0.0);
            let mut step_parts = LossParts::default();
            for slot in slots.iter_mut() {
                if let Some(e) = slot.err.take() {
                    return Err(e);
                }
                for (dst, src) in master_grads.iter_mut().zip(&slot.grads) {
                    *dst += *src;
                }
                step_parts.total += slot.parts.total;
                step_parts.q_loss += slot.parts.q_loss;
                step_parts.triplet += slot.parts.triplet;
                step_parts.gated_triplet += slot.parts.gated_triplet;
                step_parts.n += slot.parts.n;
            }
            if !step_parts.total.is_finite() {
                let users: Vec<u64> = batch.iter().take(8).map(|s| s.user_id).collect();
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch} step {step}: total={} q={} triplet={} gated={}; first batch users {:?}",
                    step_parts.total,
                    step_parts.q_loss,
                    step_parts.triplet,
                    step_parts.gated_triplet,
                    users
                )));
            }
            clip_global_norm(&mut master_grads, config.grad_clip);
            state
                .adam
                .step(&mut state.model.params, &master_grads, config.learning_rate);
            let w = b as f64;
            weighted.0 += step_parts.total * w;
            weighted.1 += step_parts.q_loss * w;
            weighted.2 += step_parts.triplet * w;
            weighted.3 += step_parts.gated_triplet * w;
            sums.n += b;
        }

        let val_ndcg10 = match validation {
            Some(val) if !val.is_empty() => {
                let report = eval::evaluate(&state.model, config, val, &[10])?;
                Some(report.ndcg[&10])
            }
            _ => None,
        };
        let denom = sums.n.max(1) as f64;
        logs.push(EpochLog {
            epoch,
            q_loss: weighted.1 / denom,
            triplet_loss: weighted.2 / denom,
            gated_loss: weighted.3 / denom,
            total: weighted.0 / denom,
            wall_seconds: start.elapsed().as_secs_f64(),
            val_ndcg10,
        });
        sums.n = 0;
        state.epoch += 1;
    }

    Ok(TrainOutcome { state, logs })
}
