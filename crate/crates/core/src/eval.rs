//! Full-ranking evaluation: every real catalog item is scored by distance
//! to the predicted intent embedding, the held-out target's rank yields
//! NDCG@K, and per-K means are reported on the percent scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::SequenceSample;
use crate::encoder::{gru_forward, nextitnet_forward, EncoderCache, EncoderLayout};
use crate::error::{Error, Result};
use crate::intent::{intent_forward, IntentCache};
use crate::math::Real;
use crate::model::Model;
use crate::rng::fnv1a;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// K -> mean per-user NDCG@K, percent scale.
    pub ndcg: BTreeMap<u32, f64>,
    pub num_test_users: usize,
    pub config_fingerprint: String,
}

/// 1-based full-ranking position of the target among all real items,
/// scored by Euclidean distance to the prediction. Ties break by ascending
/// item id (the target wins ties against higher ids); the padding row is
/// not a candidate.
pub fn rank_target<T: Real>(
    prediction: &[T],
    item_table: &[T],
    d: usize,
    num_items: u32,
    target_item: u32,
) -> Result<u32> {
    if target_item >= num_items {
        return Err(Error::Index(format!(
            "target item {target_item} is not a real item (catalog has {num_items})"
        )));
    }
    let sq_dist = |id: u32| -> f64 {
        let row = &item_table[id as usize * d..(id as usize + 1) * d];
        let mut acc = 0.0f64;
        for (p, x) in prediction.iter().zip(row) {
            let diff = p.into_f64() - x.into_f64();
            acc += diff * diff;
        }
        acc
    };
    let target_dist = sq_dist(target_item);
    let mut closer = 0u32;
    for id in 0..num_items {
        if id == target_item {
            continue;
        }
        let dist = sq_dist(id);
        if dist < target_dist || (dist == target_dist && id < target_item) {
            closer += 1;
        }
    }
    Ok(closer + 1)
}

/// Single-relevant-item NDCG: `1/log2(rank+1)` inside the cutoff, else 0.
pub fn ndcg_at_k(rank: u32, k: u32) -> f64 {
    if rank <= k {
        1.0 / ((rank as f64) + 1.0).log2()
    } else {
        0.0
    }
}

pub fn config_fingerprint(config: &TrainConfig) -> String {
    format!("{:016x}", fnv1a(config.to_kv_text().as_bytes()))
}

/// Encode the history, predict the intent embedding and rank the held-out
/// target for one sample.
fn rank_sample(model: &Model<f32>, sample: &SequenceSample, strict_relu: bool) -> u32 {
    let d = model.dims.d;
    let h = model.dims.history_len;
    let pad = model.padding_item();
    let mut gather = vec![0.0f32; h * d];
    for (t, &id) in sample.history_items.iter().enumerate() {
        if id != pad {
            gather[t * d..(t + 1) * d]
                .copy_from_slice(&model.item_table()[id as usize * d..(id as usize + 1) * d]);
        }
    }
    let mut enc = EncoderCache::new();
    match &model.layout.encoder {
        EncoderLayout::NextItNet(lay) => nextitnet_forward(&model.params, lay, &gather, h, &mut enc),
        EncoderLayout::Gru(lay) => gru_forward(&model.params, lay, &gather, h, &mut enc),
    }
    let seq_final = &enc.out[(h - 1) * d..h * d];
    let mut intent = IntentCache::new();
    intent_forward(
        &model.params,
        &model.layout.intent,
        seq_final,
        strict_relu,
        &mut intent,
    );
    rank_target(
        &intent.a[2],
        model.item_table(),
        d,
        model.dims.num_items,
        sample.target_item,
    )
    .expect("targets are validated at ingest")
}

/// Evaluate a model over a leave-one-out test set.
pub fn evaluate(
    model: &Model<f32>,
    config: &TrainConfig,
    test: &[SequenceSample],
    ks: &[u32],
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    for s in test {
        if s.target_item >= model.dims.num_items {
            return Err(Error::Data(format!(
                "test target {} outside the trained catalog ({} items)",
                s.target_item, model.dims.num_items
            )));
        }
    }
    let strict_relu = model.dims.strict_relu;
    let ranks: Vec<u32> = test
        .par_iter()
        .map(|sample| rank_sample(model, sample, strict_relu))
        .collect();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        let mean: f64 =
            ranks.iter().map(|&r| ndcg_at_k(r, k)).sum::<f64>() / ranks.len() as f64;
        ndcg.insert(k, mean * 100.0);
    }
    Ok(MetricsReport {
        ndcg,
        num_test_users: test.len(),
        config_fingerprint: config_fingerprint(config),
    })
}

/// Plain-text one-row table in the `N@5 N@10 N@15 N@20` column layout.
pub fn render_table(label: &str, report: &MetricsReport) -> String {
    let mut header = format!("{:<24}", "Method");
    let mut row = format!("{label:<24}");
    for (k, v) in &report.ndcg {
        let col = format!("N@{k}");
        let _ = write!(header, "{col:>10}");
        let _ = write!(row, "{v:>10.4}");
    }
    format!("{header}\n{row}\n")
}
