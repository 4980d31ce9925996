//! Run configuration and the flat `key = value` config-text format with
//! section headers (used for config files, run manifests and the config
//! block embedded in checkpoints).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::encoder::EncoderKind;
use crate::error::{Error, Result};

/// Every hyperparameter and ablation flag. Together with a seed this fully
/// determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Embedding dimension.
    pub d: usize,
    /// History window length H.
    pub history_len: usize,
    /// Attention heads in the contextual Q estimators.
    pub heads: usize,
    /// Discount factor.
    pub gamma: f64,
    /// Triplet margin.
    pub margin: f64,
    /// Gate epsilon.
    pub epsilon: f64,
    /// Upper bound on the gate value.
    pub gate_cap: f64,
    /// Negatives per sample.
    pub k_negatives: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub seed: u64,
    pub encoder: EncoderKind,
    /// ReLU on the intent head's output layer (paper-literal mode).
    pub strict_relu: bool,
    /// Ablation: replace attention in the Q estimators by mean pooling.
    pub no_mha: bool,
    /// Ablation: drop the gate (gate = 1).
    pub no_gate: bool,
    /// Ablation: drop the scenario-aware intent module entirely.
    pub no_suim: bool,
    /// Convolution kernel width of the sequence encoder.
    pub kernel_width: usize,
    /// Dilation schedule (pairs form residual blocks).
    pub dilations: Vec<usize>,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            history_len: 20,
            heads: 4,
            gamma: 0.5,
            margin: 1.0,
            epsilon: 1e-6,
            gate_cap: 100.0,
            k_negatives: 10,
            learning_rate: 0.01,
            batch_size: 256,
            epochs: 50,
            seed: 42,
            encoder: EncoderKind::NextItNet,
            strict_relu: false,
            no_mha: false,
            no_gate: false,
            no_suim: false,
            kernel_width: 3,
            dilations: vec![1, 2, 4, 8, 1, 2, 4, 8],
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.history_len == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "d, history_len and batch_size must be >= 1".into(),
            ));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide d ({})",
                self.heads, self.d
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must be in [0, 1)".into()));
        }
        if self.margin < 0.0 {
            return Err(Error::Config("margin must be >= 0".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.gate_cap < 1.0 {
            return Err(Error::Config("gate_cap must be >= 1".into()));
        }
        if self.k_negatives == 0 {
            return Err(Error::Config("k_negatives must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config("grad_clip must be >= 0".into()));
        }
        if self.dilations.is_empty() || self.dilations.len() % 2 != 0 {
            return Err(Error::Config(
                "dilations must be a non-empty even-length list".into(),
            ));
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "history_len = {}", self.history_len);
        let _ = writeln!(s, "heads = {}", self.heads);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "gate_cap = {}", self.gate_cap);
        let _ = writeln!(s, "k_negatives = {}", self.k_negatives);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "encoder = {}", self.encoder.as_str());
        let _ = writeln!(s, "strict_relu = {}", self.strict_relu);
        let _ = writeln!(s, "no_mha = {}", self.no_mha);
        let _ = writeln!(s, "no_gate = {}", self.no_gate);
        let _ = writeln!(s, "no_suim = {}", self.no_suim);
        let _ = writeln!(s, "kernel_width = {}", self.kernel_width);
        let _ = writeln!(
            s,
            "dilations = {}",
            self.dilations
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "grad_clip = {}", self.grad_clip);
        s
    }

    /// Build from a `[train]` section, starting from defaults. Unknown keys
    /// are an error.
    pub fn from_section(section: &BTreeMap<String, String>) -> Result<Self> {
        let mut remaining = section.clone();
        let mut cfg = TrainConfig::default();
        cfg.d = take(&mut remaining, "d")?.unwrap_or(cfg.d);
        cfg.history_len = take(&mut remaining, "history_len")?.unwrap_or(cfg.history_len);
        cfg.heads = take(&mut remaining, "heads")?.unwrap_or(cfg.heads);
        cfg.gamma = take(&mut remaining, "gamma")?.unwrap_or(cfg.gamma);
        cfg.margin = take(&mut remaining, "margin")?.unwrap_or(cfg.margin);
        cfg.epsilon = take(&mut remaining, "epsilon")?.unwrap_or(cfg.epsilon);
        cfg.gate_cap = take(&mut remaining, "gate_cap")?.unwrap_or(cfg.gate_cap);
        cfg.k_negatives = take(&mut remaining, "k_negatives")?.unwrap_or(cfg.k_negatives);
        cfg.learning_rate = take(&mut remaining, "learning_rate")?.unwrap_or(cfg.learning_rate);
        cfg.batch_size = take(&mut remaining, "batch_size")?.unwrap_or(cfg.batch_size);
        cfg.epochs = take(&mut remaining, "epochs")?.unwrap_or(cfg.epochs);
        cfg.seed = take(&mut remaining, "seed")?.unwrap_or(cfg.seed);
        if let Some(enc) = remaining.remove("encoder") {
            cfg.encoder = EncoderKind::parse(&enc)
                .ok_or_else(|| Error::Config(format!("unknown encoder '{enc}'")))?;
        }
        cfg.strict_relu = take(&mut remaining, "strict_relu")?.unwrap_or(cfg.strict_relu);
        cfg.no_mha = take(&mut remaining, "no_mha")?.unwrap_or(cfg.no_mha);
        cfg.no_gate = take(&mut remaining, "no_gate")?.unwrap_or(cfg.no_gate);
        cfg.no_suim = take(&mut remaining, "no_suim")?.unwrap_or(cfg.no_suim);
        cfg.kernel_width = take(&mut remaining, "kernel_width")?.unwrap_or(cfg.kernel_width);
        if let Some(text) = remaining.remove("dilations") {
            cfg.dilations = parse_usize_list(&text)?;
        }
        cfg.grad_clip = take(&mut remaining, "grad_clip")?.unwrap_or(cfg.grad_clip);
        if let Some(key) = remaining.keys().next() {
            return Err(Error::Config(format!("unknown [train] key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let sections = parse_kv_text(text)?;
        let section = sections
            .get("train")
            .ok_or_else(|| Error::Config("missing [train] section".into()))?;
        Self::from_section(section)
    }
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'"))),
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid list entry '{p}'")))
        })
        .collect()
}

/// Parse sectioned `key = value` text. `#` starts a comment; keys before
/// any section header are rejected; duplicate keys within a section are
/// rejected.
pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        let section = current
            .as_ref()
            .ok_or_else(|| Error::Config(format!("line {}: key outside any section", lineno + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entry = sections.get_mut(section).unwrap();
        if entry.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "duplicate key '{key}' in section [{section}]"
            )));
        }
    }
    Ok(sections)
}

/// Render one section of `key = value` text.
pub fn render_section(name: &str, pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[{name}]");
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Map a `[synth]` section onto a generator config (defaults fill gaps).
pub fn synth_config_from_section(
    section: &BTreeMap<String, String>,
) -> Result<crate::synth::SynthConfig> {
    let mut remaining = section.clone();
    let mut cfg = crate::synth::SynthConfig::default();
    cfg.num_users = take(&mut remaining, "num_users")?.unwrap_or(cfg.num_users);
    cfg.num_items = take(&mut remaining, "num_items")?.unwrap_or(cfg.num_items);
    cfg.num_scenarios = take(&mut remaining, "num_scenarios")?.unwrap_or(cfg.num_scenarios);
    cfg.num_topics = take(&mut remaining, "num_topics")?.unwrap_or(cfg.num_topics);
    cfg.events_per_user = take(&mut remaining, "events_per_user")?.unwrap_or(cfg.events_per_user);
    cfg.shift_probability =
        take(&mut remaining, "shift_probability")?.unwrap_or(cfg.shift_probability);
    cfg.scenario_affinity_concentration = take(&mut remaining, "scenario_affinity_concentration")?
        .unwrap_or(cfg.scenario_affinity_concentration);
    cfg.seed = take(&mut remaining, "seed")?.unwrap_or(cfg.seed);
    if let Some(key) = remaining.keys().next() {
        return Err(Error::Config(format!("unknown [synth] key '{key}'")));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth_config_to_kv_text(cfg: &crate::synth::SynthConfig) -> String {
    render_section(
        "synth",
        &[
            ("num_users".into(), cfg.num_users.to_string()),
            ("num_items".into(), cfg.num_items.to_string()),
            ("num_scenarios".into(), cfg.num_scenarios.to_string()),
            ("num_topics".into(), cfg.num_topics.to_string()),
            ("events_per_user".into(), cfg.events_per_user.to_string()),
            ("shift_probability".into(), cfg.shift_probability.to_string()),
            (
                "scenario_affinity_concentration".into(),
                cfg.scenario_affinity_concentration.to_string(),
            ),
            ("seed".into(), cfg.seed.to_string()),
        ],
    )
}
