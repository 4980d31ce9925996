//! Finite-difference verification of the full combined loss.
//!
//! The model is rebuilt in f64 and every parameter is perturbed by
//! `h = 1e-5` with the detached values (Q targets, gates, negative draws,
//! coin) frozen, so the numeric gradient measures exactly the function the
//! backward pass differentiates. The gate's stop-gradient is additionally
//! checked in isolation: the gated triplet term alone must put exactly
//! zero gradient on every Q-estimator tensor.

use std::fmt;

use crate::config::TrainConfig;
use crate::data::{build_sequences, Catalog, SequenceSample};
use crate::error::{Error, Result};
use crate::loss::{batch_loss, build_batch_ctx, Ablation, LossHyper, LossMode, Workspace};
use crate::math::relative_error;
use crate::model::{Model, ModelDims};
use crate::qnet::Coin;
use crate::synth::{generate, SynthConfig};

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
    /// Max |gradient| the gated triplet term alone puts on Q tensors;
    /// must be exactly zero.
    pub gate_isolation_max_abs: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failing_groups(&self) -> Vec<&GroupReport> {
        self.groups
            .iter()
            .filter(|g| !(g.max_rel_error < self.tolerance))
            .collect()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradient check (tolerance {:.1e})", self.tolerance)?;
        for g in &self.groups {
            let status = if g.max_rel_error < self.tolerance {
                "ok  "
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "  [{status}] {:<20} max_rel {:.3e}  (analytic {:+.6e}, numeric {:+.6e})",
                g.name, g.max_rel_error, g.worst_analytic, g.worst_numeric
            )?;
        }
        writeln!(
            f,
            "  gate isolation: max |grad| on Q tensors via gated term = {:e}",
            self.gate_isolation_max_abs
        )?;
        writeln!(f, "  overall: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// The tiny default configuration: d=8, H=5, 4 heads, one residual block.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        d: 8,
        history_len: 5,
        heads: 4,
        dilations: vec![1, 2],
        batch_size: 4,
        seed: 20_24,
        ..TrainConfig::default()
    }
}

/// Deterministic fixture batch for a given config: 20 items, 3 scenarios,
/// and `batch_size` samples whose histories are full (no padded
/// positions), keeping the finite differences away from ReLU/hinge kinks.
pub fn fixture_for(config: &TrainConfig) -> Result<(Catalog, Vec<SequenceSample>)> {
    let batch = config.batch_size.clamp(1, 8);
    let synth = SynthConfig {
        num_users: 6,
        num_items: 20,
        num_scenarios: 3,
        num_topics: 4,
        events_per_user: (config.history_len + 4) as u64,
        shift_probability: 0.25,
        scenario_affinity_concentration: 1.0,
        seed: 71,
    };
    let records = generate(&synth)?;
    let catalog = Catalog::new(20, 3)?;
    let samples = build_sequences(&records, config.history_len, &catalog)?;
    let pad = catalog.padding_item_id();
    let full: Vec<SequenceSample> = samples
        .into_iter()
        .filter(|s| s.history_items.iter().all(|&i| i != pad))
        .take(batch)
        .collect();
    if full.len() < batch {
        return Err(Error::Data(
            "fixture generation produced too few samples".into(),
        ));
    }
    Ok((catalog, full))
}

/// The tiny config together with its fixture batch.
pub fn default_fixture() -> Result<(TrainConfig, Catalog, Vec<SequenceSample>)> {
    let config = tiny_config();
    let (catalog, samples) = fixture_for(&config)?;
    Ok((config, catalog, samples))
}

/// Run the finite-difference check. `fault_group`, when set, multiplies
/// the analytic gradient of the matching tensor by 1.1 before comparison —
/// the fault-injection mode used to prove the harness catches errors.
pub fn grad_check_with_fault(
    config: &TrainConfig,
    catalog: &Catalog,
    samples: &[SequenceSample],
    tolerance: f64,
    fault_group: Option<&str>,
) -> Result<GradCheckReport> {
    if samples.is_empty() {
        return Err(Error::Data("gradient check needs at least one sample".into()));
    }
    let dims = ModelDims::from_config(config, catalog)?;
    let model: Model<f64> = Model::init(dims, config.seed)?;
    let hyper = LossHyper::from_config(config);
    let abl = Ablation::from_config(config);
    let batch: Vec<&SequenceSample> = samples.iter().collect();

    let mut groups: Vec<GroupReport> = model
        .layout
        .metas
        .iter()
        .map(|m| GroupReport {
            name: m.name.clone(),
            max_rel_error: 0.0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        })
        .collect();
    if let Some(fault) = fault_group {
        if !groups.iter().any(|g| g.name == fault) {
            return Err(Error::Config(format!("unknown parameter group '{fault}'")));
        }
    }

    let mut ws = Workspace::new();
    let mut gate_isolation_max = 0.0f64;

    // Both coins: each estimator must pass through its chosen-side backward.
    for coin in [Coin::A, Coin::B] {
        let mut ctx = build_batch_ctx(
            catalog,
            &batch,
            config.k_negatives,
            coin,
            config.seed,
            0,
            0,
        )?;
        // Freeze the detached values at the unperturbed parameters.
        let mut frozen = Vec::new();
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper,
            abl,
            LossMode::Full,
            None,
            Some(&mut frozen),
            &mut ws,
        )?;
        ctx.frozen = Some(frozen);

        // Analytic gradients of the frozen objective.
        let mut grads = vec![0.0f64; model.layout.total];
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper,
            abl,
            LossMode::Full,
            Some(&mut grads),
            None,
            &mut ws,
        )?;
        if let Some(fault) = fault_group {
            let meta = model
                .layout
                .metas
                .iter()
                .find(|m| m.name == fault)
                .expect("validated above");
            for g in &mut grads[meta.range()] {
                *g *= 1.1;
            }
        }

        // Central differences, parameter by parameter.
        let mut probe = model.clone();
        for (meta, group) in model.layout.metas.iter().zip(groups.iter_mut()) {
            for i in meta.range() {
                let original = probe.params[i];
                probe.params[i] = original + FD_STEP;
                let up = batch_loss(
                    &probe, &batch, &ctx, &hyper, abl, LossMode::Full, None, None, &mut ws,
                )?
                .total;
                probe.params[i] = original - FD_STEP;
                let down = batch_loss(
                    &probe, &batch, &ctx, &hyper, abl, LossMode::Full, None, None, &mut ws,
                )?
                .total;
                probe.params[i] = original;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let rel = relative_error(grads[i], numeric);
                if rel > group.max_rel_error {
                    group.max_rel_error = rel;
                    group.worst_analytic = grads[i];
                    group.worst_numeric = numeric;
                }
            }
        }

        // Gate isolation: the gated term alone must leave Q tensors alone.
        let mut grads_gated = vec![0.0f64; model.layout.total];
        batch_loss(
            &model,
            &batch,
            &ctx,
            &hyper,
            abl,
            LossMode::GatedTripletOnly,
            Some(&mut grads_gated),
            None,
            &mut ws,
        )?;
        for range in [
            model.layout.q_a.wq.start..model.layout.q_a.fc2_b.end,
            model.layout.q_b.wq.start..model.layout.q_b.fc2_b.end,
        ] {
            for &g in &grads_gated[range] {
                gate_isolation_max = gate_isolation_max.max(g.abs());
            }
        }
    }

    let passed = groups.iter().all(|g| g.max_rel_error < tolerance)
        && gate_isolation_max == 0.0;
    Ok(GradCheckReport {
        tolerance,
        groups,
        gate_isolation_max_abs: gate_isolation_max,
        passed,
    })
}

pub fn grad_check(
    config: &TrainConfig,
    catalog: &Catalog,
    samples: &[SequenceSample],
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_with_fault(config, catalog, samples, tolerance, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fixture_passes_within_tolerance() {
        let (config, catalog, samples) = default_fixture().unwrap();
        let report = grad_check(&config, &catalog, &samples, 1e-4).unwrap();
        assert!(report.passed, "{report}");
        assert_eq!(report.gate_isolation_max_abs, 0.0);
    }

    #[test]
    fn fault_injection_flags_exactly_the_corrupted_group() {
        let (config, catalog, samples) = default_fixture().unwrap();
        let report =
            grad_check_with_fault(&config, &catalog, &samples, 1e-4, Some("intent.fc0.w"))
                .unwrap();
        assert!(!report.passed);
        let failing: Vec<&str> = report
            .failing_groups()
            .iter()
            .map(|g| g.name.as_str())
            .collect();
        assert_eq!(failing, vec!["intent.fc0.w"], "{report}");
    }

    #[test]
    fn unachievable_tolerance_fails() {
        let (config, catalog, samples) = default_fixture().unwrap();
        let report = grad_check(&config, &catalog, &samples, 1e-13).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn unknown_fault_group_is_a_config_error() {
        let (config, catalog, samples) = default_fixture().unwrap();
        assert!(
            grad_check_with_fault(&config, &catalog, &samples, 1e-4, Some("nope")).is_err()
        );
    }
}
