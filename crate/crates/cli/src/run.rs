//! Command implementations: each run resolves its configuration, does the
//! work, and writes a manifest sufficient to reproduce it exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ruie_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ruie_core::config::{
    parse_kv_text, render_section, synth_config_from_section, synth_config_to_kv_text,
};
use ruie_core::data::{
    densify_ids, parse_interactions_file, split_leave_one_out, write_id_map, write_records_csv,
    write_samples_jsonl, ParseOptions, SequenceSample,
};
use ruie_core::encoder::EncoderKind;
use ruie_core::error::{Error, Result};
use ruie_core::eval::{evaluate, render_table, MetricsReport};
use ruie_core::gradcheck::{fixture_for, grad_check_with_fault, tiny_config};
use ruie_core::rng::fnv1a;
use ruie_core::synth::{describe, generate};
use ruie_core::train::{resume as resume_training, train, write_epoch_logs, TrainOutcome};
use ruie_core::{Catalog, TrainConfig};

use crate::TrainOverrides;

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn read_config_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Write a `manifest.txt`-style reproduction record: the command, its
/// inputs, the fully resolved configuration and hashes of every artifact.
fn write_manifest(
    path: &Path,
    command: &str,
    started: u64,
    run_fields: &[(String, String)],
    config_text: &str,
    artifacts: &[PathBuf],
) -> Result<()> {
    let mut fields = vec![
        ("command".to_string(), command.to_string()),
        ("started_unix".to_string(), started.to_string()),
        ("finished_unix".to_string(), now_unix().to_string()),
    ];
    fields.extend_from_slice(run_fields);
    let mut text = render_section("run", &fields);
    text.push('\n');
    text.push_str(config_text);
    let mut entries = Vec::new();
    for artifact in artifacts {
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| artifact.display().to_string());
        entries.push((name, hash_file(artifact)?));
    }
    text.push('\n');
    text.push_str(&render_section("artifacts", &entries));
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let started = now_unix();
    let text = read_config_text(config_path)?;
    let sections = parse_kv_text(&text)?;
    let section = sections
        .get("synth")
        .ok_or_else(|| Error::Config(format!("{}: missing [synth] section", config_path.display())))?;
    let mut cfg = synth_config_from_section(section)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let records = generate(&cfg)?;
    write_records_csv(out, &records)?;
    let summary = describe(&records);
    println!(
        "wrote {} records ({} users, {} scenarios, {} distinct items) to {}",
        summary.num_records,
        summary.per_user.len(),
        summary.per_scenario.len(),
        summary.item_popularity.len(),
        out.display()
    );
    let manifest_path = manifest_sibling(out);
    write_manifest(
        &manifest_path,
        "synth",
        started,
        &[
            ("config".into(), config_path.display().to_string()),
            ("out".into(), out.display().to_string()),
            ("seed".into(), cfg.seed.to_string()),
        ],
        &synth_config_to_kv_text(&cfg),
        &[out.to_path_buf()],
    )
}

fn manifest_sibling(out_file: &Path) -> PathBuf {
    let mut name = out_file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".manifest");
    out_file.with_file_name(name)
}

/// Densified catalog, splits and id maps for one records file.
pub struct Prepared {
    pub catalog: Catalog,
    pub train: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub item_map: Vec<u64>,
    pub scenario_map: Vec<u64>,
    pub malformed_rows: usize,
    pub total_rows: usize,
}

pub fn prepare_data(data: &Path, history_len: usize) -> Result<Prepared> {
    let outcome = parse_interactions_file(data, &ParseOptions::default())?;
    if outcome.records.is_empty() {
        return Err(Error::Data(format!(
            "{}: no usable records",
            data.display()
        )));
    }
    let dense = densify_ids(&outcome.records)?;
    let samples = ruie_core::data::build_sequences(&dense.records, history_len, &dense.catalog)?;
    let (train, test) = split_leave_one_out(samples);
    Ok(Prepared {
        catalog: dense.catalog,
        train,
        test,
        item_map: dense.item_ids,
        scenario_map: dense.scenario_ids,
        malformed_rows: outcome.malformed_rows,
        total_rows: outcome.total_rows,
    })
}

fn write_id_maps(out_dir: &Path, prepared: &Prepared) -> Result<(PathBuf, PathBuf)> {
    let items = out_dir.join("items.map");
    let scenarios = out_dir.join("scenarios.map");
    write_id_map(&items, &prepared.item_map)?;
    write_id_map(&scenarios, &prepared.scenario_map)?;
    Ok((items, scenarios))
}

pub fn cmd_ingest(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    history_len: Option<usize>,
) -> Result<()> {
    let started = now_unix();
    let mut cfg = resolve_train_config(config)?;
    if let Some(h) = history_len {
        cfg.history_len = h;
    }
    let prepared = prepare_data(data, cfg.history_len)?;
    ensure_dir(out)?;
    let train_path = out.join("train.jsonl");
    let test_path = out.join("test.jsonl");
    write_samples_jsonl(&train_path, &prepared.train)?;
    write_samples_jsonl(&test_path, &prepared.test)?;
    let (items_path, scen_path) = write_id_maps(out, &prepared)?;
    println!(
        "{} rows ({} malformed skipped) -> {} train / {} test samples; catalog {} items, {} scenarios",
        prepared.total_rows,
        prepared.malformed_rows,
        prepared.train.len(),
        prepared.test.len(),
        prepared.catalog.num_items,
        prepared.catalog.num_scenarios
    );
    write_manifest(
        &out.join("manifest.txt"),
        "ingest",
        started,
        &[
            ("data".into(), data.display().to_string()),
            ("out".into(), out.display().to_string()),
            ("history_len".into(), cfg.history_len.to_string()),
        ],
        "",
        &[train_path, test_path, items_path, scen_path],
    )
}

fn resolve_train_config(config: Option<&Path>) -> Result<TrainConfig> {
    match config {
        None => Ok(TrainConfig::default()),
        Some(path) => {
            let text = read_config_text(path)?;
            let sections = parse_kv_text(&text)?;
            let section = sections.get("train").ok_or_else(|| {
                Error::Config(format!("{}: missing [train] section", path.display()))
            })?;
            TrainConfig::from_section(section)
        }
    }
}

fn apply_overrides(cfg: &mut TrainConfig, ov: &TrainOverrides) -> Result<()> {
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = ov.epochs {
        cfg.epochs = epochs;
    }
    if ov.no_mha {
        cfg.no_mha = true;
    }
    if ov.no_gate {
        cfg.no_gate = true;
    }
    if ov.no_suim {
        cfg.no_suim = true;
    }
    if let Some(enc) = &ov.encoder {
        cfg.encoder = EncoderKind::parse(enc)
            .ok_or_else(|| Error::Config(format!("unknown encoder '{enc}'")))?;
    }
    if ov.strict_relu {
        cfg.strict_relu = true;
    }
    cfg.validate()
}

fn train_into(
    data: &Path,
    out: &Path,
    cfg: &TrainConfig,
    resume_from: Option<&Path>,
) -> Result<(TrainOutcome, Prepared, Vec<PathBuf>)> {
    let prepared = prepare_data(data, cfg.history_len)?;
    let outcome = match resume_from {
        None => train(&prepared.train, &prepared.catalog, cfg, None)?,
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path)?;
            if ckpt.num_items != prepared.catalog.num_items
                || ckpt.num_scenarios != prepared.catalog.num_scenarios
            {
                return Err(Error::Data(format!(
                    "checkpoint was trained on {} items / {} scenarios but the data has {} / {}",
                    ckpt.num_items,
                    ckpt.num_scenarios,
                    prepared.catalog.num_items,
                    prepared.catalog.num_scenarios
                )));
            }
            let state = ckpt.into_state()?;
            resume_training(state, &prepared.train, &prepared.catalog, cfg, None)?
        }
    };
    ensure_dir(out)?;
    let ckpt_path = out.join("checkpoint.ruie");
    save_checkpoint(&Checkpoint::from_state(&outcome.state, cfg), &ckpt_path)?;
    let log_path = out.join("epochs.jsonl");
    write_epoch_logs(&log_path, &outcome.logs)?;
    let (items_path, scen_path) = write_id_maps(out, &prepared)?;
    Ok((
        outcome,
        prepared,
        vec![ckpt_path, log_path, items_path, scen_path],
    ))
}

pub fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    resume_from: Option<&Path>,
    overrides: &TrainOverrides,
) -> Result<()> {
    let started = now_unix();
    let mut cfg = match resume_from {
        // A resumed run continues under the checkpoint's own config; only
        // the epoch target (and seed-independent flags) come from the CLI.
        Some(ckpt_path) => load_checkpoint(ckpt_path)?.config,
        None => resolve_train_config(config)?,
    };
    apply_overrides(&mut cfg, overrides)?;
    let (outcome, _prepared, artifacts) = train_into(data, out, &cfg, resume_from)?;
    if let Some(last) = outcome.logs.last() {
        println!(
            "epoch {}: total {:.4} (q {:.4}, triplet {:.4}, gated {:.4})",
            last.epoch, last.total, last.q_loss, last.triplet_loss, last.gated_loss
        );
    }
    println!("checkpoint: {}", artifacts[0].display());
    write_manifest(
        &out.join("manifest.txt"),
        "train",
        started,
        &[
            ("data".into(), data.display().to_string()),
            ("out".into(), out.display().to_string()),
            ("seed".into(), cfg.seed.to_string()),
            (
                "resumed_from".into(),
                resume_from
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "-".into()),
            ),
        ],
        &cfg.to_kv_text(),
        &artifacts,
    )
}

fn parse_ks(text: &str) -> Result<Vec<u32>> {
    let ks: std::result::Result<Vec<u32>, _> =
        text.split(',').map(|p| p.trim().parse::<u32>()).collect();
    let ks = ks.map_err(|_| Error::Config(format!("invalid K list '{text}'")))?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("K values must be positive".into()));
    }
    Ok(ks)
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path, k: &str) -> Result<()> {
    let started = now_unix();
    let ks = parse_ks(k)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let cfg = ckpt.config.clone();
    let prepared = prepare_data(data, cfg.history_len)?;
    if ckpt.num_items != prepared.catalog.num_items
        || ckpt.num_scenarios != prepared.catalog.num_scenarios
    {
        return Err(Error::Data(format!(
            "checkpoint was trained on {} items / {} scenarios but the data has {} / {}",
            ckpt.num_items,
            ckpt.num_scenarios,
            prepared.catalog.num_items,
            prepared.catalog.num_scenarios
        )));
    }
    let state = ckpt.into_state()?;
    let report = evaluate(&state.model, &cfg, &prepared.test, &ks)?;
    ensure_dir(out)?;
    let json_path = out.join("metrics.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json_path, &json).map_err(|e| Error::io(&json_path, e))?;
    let table = render_table("RUIE", &report);
    let table_path = out.join("metrics.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    print!("{table}");
    write_manifest(
        &out.join("manifest.txt"),
        "eval",
        started,
        &[
            ("checkpoint".into(), checkpoint.display().to_string()),
            ("data".into(), data.display().to_string()),
            ("out".into(), out.display().to_string()),
        ],
        &cfg.to_kv_text(),
        &[json_path, table_path],
    )
}

pub fn cmd_gradcheck(
    config: Option<&Path>,
    tolerance: f64,
    inject_fault: Option<&str>,
) -> Result<()> {
    let cfg = match config {
        None => tiny_config(),
        Some(path) => resolve_train_config(Some(path))?,
    };
    let (catalog, samples) = fixture_for(&cfg)?;
    let report = grad_check_with_fault(&cfg, &catalog, &samples, tolerance, inject_fault)?;
    print!("{report}");
    if report.passed {
        Ok(())
    } else {
        let failing: Vec<String> = report
            .failing_groups()
            .iter()
            .map(|g| g.name.clone())
            .collect();
        Err(Error::Verification(if failing.is_empty() {
            "gate isolation violated".into()
        } else {
            format!("gradient check failed for groups: {}", failing.join(", "))
        }))
    }
}

pub fn cmd_ablation(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let started = now_unix();
    let mut base = resolve_train_config(config)?;
    if let Some(s) = seed {
        base.seed = s;
    }
    let variants: [(&str, &str, bool, bool, bool); 4] = [
        ("ruie", "RUIE", false, false, false),
        ("ruie_wo_mha", "RUIE w/o MHA", true, false, false),
        ("ruie_wo_mha_gate", "RUIE w/o MHA&Gate", true, true, false),
        (
            "ruie_wo_mha_gate_suim",
            "RUIE w/o MHA&Gate&SUIM",
            true,
            true,
            true,
        ),
    ];
    ensure_dir(out)?;
    let mut reports: Vec<(&str, MetricsReport)> = Vec::new();
    for (dir_name, label, no_mha, no_gate, no_suim) in variants {
        let mut cfg = base.clone();
        cfg.no_mha = no_mha;
        cfg.no_gate = no_gate;
        cfg.no_suim = no_suim;
        let variant_out = out.join(dir_name);
        let (outcome, prepared, mut artifacts) = train_into(data, &variant_out, &cfg, None)?;
        let report = evaluate(
            &outcome.state.model,
            &cfg,
            &prepared.test,
            &[5, 10, 15, 20],
        )?;
        let json_path = variant_out.join("metrics.json");
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&json_path, &json).map_err(|e| Error::io(&json_path, e))?;
        artifacts.push(json_path);
        write_manifest(
            &variant_out.join("manifest.txt"),
            "ablation-variant",
            started,
            &[
                ("data".into(), data.display().to_string()),
                ("variant".into(), label.to_string()),
            ],
            &cfg.to_kv_text(),
            &artifacts,
        )?;
        println!("{label}: done");
        reports.push((label, report));
    }
    // Comparison table in the ablation-study layout.
    let mut table = format!("{:<28}", "Method");
    for k in [5u32, 10, 15, 20] {
        let _ = write!(table, "{:>10}", format!("N@{k}"));
    }
    table.push('\n');
    for (label, report) in &reports {
        let _ = write!(table, "{label:<28}");
        for k in [5u32, 10, 15, 20] {
            let _ = write!(table, "{:>10.4}", report.ndcg[&k]);
        }
        table.push('\n');
    }
    let table_path = out.join("ablation.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    print!("{table}");
    write_manifest(
        &out.join("manifest.txt"),
        "ablation",
        started,
        &[
            ("data".into(), data.display().to_string()),
            ("out".into(), out.display().to_string()),
            ("seed".into(), base.seed.to_string()),
        ],
        &base.to_kv_text(),
        &[table_path],
    )
}
