//! Synthetic multi-scenario interaction logs with controllable interest
//! drift.
//!
//! Each user carries a latent (active scenario, active topic) pair. Topics
//! belong to scenarios (topic `t` to scenario `t % num_scenarios`), so each
//! scene has its own content universe. With probability
//! `shift_probability` per event the user jumps to a new scenario and a new
//! topic inside it — the correlated scene-and-interest drift the gating
//! mechanism is meant to detect. Items are drawn from the active topic's
//! block; 10% of events carry a wrong scenario label, modeling exposure
//! bias (content surfaced in a scene the user has moved away from).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Behavior, InteractionRecord};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: u64,
    pub num_items: u64,
    pub num_scenarios: u64,
    /// Items are partitioned into this many equal blocks.
    pub num_topics: u64,
    pub events_per_user: u64,
    /// Per-event probability that scenario and topic jump together.
    pub shift_probability: f64,
    /// Concentration of the per-user scenario preference (Dirichlet-style);
    /// larger values flatten preferences, smaller values sharpen them.
    pub scenario_affinity_concentration: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 100,
            num_items: 500,
            num_scenarios: 2,
            num_topics: 10,
            events_per_user: 50,
            shift_probability: 0.05,
            scenario_affinity_concentration: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_items == 0 || self.num_scenarios == 0 || self.num_topics == 0 {
            return Err(Error::Config(
                "num_items, num_scenarios and num_topics must be >= 1".into(),
            ));
        }
        if self.num_items % self.num_topics != 0 {
            return Err(Error::Config(format!(
                "num_topics ({}) must divide num_items ({}) evenly",
                self.num_topics, self.num_items
            )));
        }
        if self.num_topics < self.num_scenarios {
            return Err(Error::Config(format!(
                "need at least one topic per scenario ({} topics, {} scenarios)",
                self.num_topics, self.num_scenarios
            )));
        }
        if !(0.0..=1.0).contains(&self.shift_probability) {
            return Err(Error::Config("shift_probability must be in [0, 1]".into()));
        }
        if !(self.scenario_affinity_concentration > 0.0) {
            return Err(Error::Config(
                "scenario_affinity_concentration must be > 0".into(),
            ));
        }
        Ok(())
    }
}

const SCENARIO_NOISE: f64 = 0.10;
const BASE_TIMESTAMP: i64 = 1_684_000_000;

fn pick_weighted<R: Rng>(weights: &[f64], exclude: Option<usize>, rng: &mut R) -> usize {
    let mut total = 0.0;
    for (i, w) in weights.iter().enumerate() {
        if Some(i) != exclude {
            total += w;
        }
    }
    if total <= 0.0 {
        // Degenerate weights; fall back to uniform over the allowed set.
        let n = weights.len() - exclude.map_or(0, |_| 1);
        let mut k = rng.random_range(0..n);
        for i in 0..weights.len() {
            if Some(i) == exclude {
                continue;
            }
            if k == 0 {
                return i;
            }
            k -= 1;
        }
        unreachable!();
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn draw_behavior<R: Rng>(rng: &mut R) -> Behavior {
    let u: f64 = rng.random();
    if u < 0.70 {
        Behavior::Click
    } else if u < 0.85 {
        Behavior::Like
    } else if u < 0.95 {
        Behavior::Share
    } else {
        Behavior::Follow
    }
}

/// Topics of one scenario: `t % num_scenarios == scenario`.
fn scenario_topics(num_topics: usize, num_scenarios: usize, scenario: usize) -> Vec<usize> {
    (0..num_topics)
        .filter(|t| t % num_scenarios == scenario)
        .collect()
}

/// Generate a full interaction log. Deterministic given the config: every
/// user draws from a stream derived from (seed, user id), so per-user
/// generation order does not matter.
pub fn generate(config: &SynthConfig) -> Result<Vec<InteractionRecord>> {
    config.validate()?;
    let topic_size = config.num_items / config.num_topics;
    let s = config.num_scenarios as usize;
    let t = config.num_topics as usize;
    let mut records =
        Vec::with_capacity((config.num_users * config.events_per_user) as usize);
    for user in 0..config.num_users {
        let mut rng = stream(config.seed, "synth.user", &[user]);
        // Per-user scenario preference via normalized Gamma draws
        // (Dirichlet(concentration) for any runtime dimension).
        let gamma = Gamma::new(config.scenario_affinity_concentration, 1.0)
            .map_err(|e| Error::Config(format!("invalid concentration: {e}")))?;
        let mut preference: Vec<f64> = (0..s).map(|_| gamma.sample(&mut rng)).collect();
        let pref_sum: f64 = preference.iter().sum();
        if pref_sum > 0.0 {
            for p in preference.iter_mut() {
                *p /= pref_sum;
            }
        }
        let mut scenario = pick_weighted(&preference, None, &mut rng);
        let mut topics = scenario_topics(t, s, scenario);
        let mut topic = topics[rng.random_range(0..topics.len())];
        let mut ts = BASE_TIMESTAMP + rng.random_range(0..3600) as i64;
        for _ in 0..config.events_per_user {
            if rng.random::<f64>() < config.shift_probability {
                // Correlated jump: the scenario moves and the interest
                // moves with it, into one of the new scene's topics.
                if s > 1 {
                    scenario = pick_weighted(&preference, Some(scenario), &mut rng);
                    topics = scenario_topics(t, s, scenario);
                    topic = topics[rng.random_range(0..topics.len())];
                } else if t > 1 {
                    let mut new_topic = rng.random_range(0..t - 1);
                    if new_topic >= topic {
                        new_topic += 1;
                    }
                    topic = new_topic;
                }
            }
            let item = topic as u64 * topic_size + rng.random_range(0..topic_size);
            let logged_scenario = if s > 1 && rng.random::<f64>() < SCENARIO_NOISE {
                let mut other = rng.random_range(0..s - 1);
                if other >= scenario {
                    other += 1;
                }
                other
            } else {
                scenario
            };
            let behavior = draw_behavior(&mut rng);
            records.push(InteractionRecord {
                user_id: user,
                item_id: item,
                scenario_id: logged_scenario as u64,
                behavior,
                timestamp: ts,
            });
            ts += 1 + rng.random_range(0..60) as i64;
        }
    }
    Ok(records)
}

/// Summary statistics over a record list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub num_records: u64,
    pub per_scenario: BTreeMap<u64, u64>,
    pub per_behavior: BTreeMap<String, u64>,
    pub per_user: BTreeMap<u64, u64>,
    pub item_popularity: BTreeMap<u64, u64>,
}

pub fn describe(records: &[InteractionRecord]) -> Summary {
    let mut s = Summary::default();
    s.num_records = records.len() as u64;
    for r in records {
        *s.per_scenario.entry(r.scenario_id).or_insert(0) += 1;
        *s.per_behavior.entry(r.behavior.as_str().to_string()).or_insert(0) += 1;
        *s.per_user.entry(r.user_id).or_insert(0) += 1;
        *s.item_popularity.entry(r.item_id).or_insert(0) += 1;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SynthConfig {
        SynthConfig {
            num_users: 10,
            num_items: 100,
            num_scenarios: 2,
            num_topics: 5,
            events_per_user: 200,
            shift_probability: 0.0,
            scenario_affinity_concentration: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn no_shift_keeps_one_dominant_scenario_per_user() {
        for seed in 0..5u64 {
            let config = SynthConfig {
                seed,
                ..base_config()
            };
            let records = generate(&config).unwrap();
            for user in 0..config.num_users {
                let per_user: Vec<_> =
                    records.iter().filter(|r| r.user_id == user).collect();
                assert_eq!(per_user.len(), 200);
                let mut counts = BTreeMap::new();
                for r in &per_user {
                    *counts.entry(r.scenario_id).or_insert(0u64) += 1;
                }
                let max = *counts.values().max().unwrap();
                assert!(
                    max as f64 >= 0.8 * per_user.len() as f64,
                    "seed {seed} user {user}: dominant scenario only {max}/200"
                );
            }
        }
    }

    #[test]
    fn zero_users_means_empty_log() {
        let config = SynthConfig {
            num_users: 0,
            ..base_config()
        };
        assert!(generate(&config).unwrap().is_empty());
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let config = SynthConfig {
            shift_probability: 0.1,
            ..base_config()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timestamps_strictly_increase_within_user() {
        let records = generate(&base_config()).unwrap();
        for w in records.windows(2) {
            if w[0].user_id == w[1].user_id {
                assert!(w[1].timestamp > w[0].timestamp);
            }
        }
    }

    #[test]
    fn ids_stay_in_bounds() {
        let config = SynthConfig {
            shift_probability: 0.3,
            ..base_config()
        };
        let records = generate(&config).unwrap();
        for r in &records {
            assert!(r.item_id < config.num_items);
            assert!(r.scenario_id < config.num_scenarios);
        }
    }

    #[test]
    fn shifting_users_visit_multiple_scenarios_in_aggregate() {
        let config = SynthConfig {
            shift_probability: 0.05,
            num_users: 50,
            ..base_config()
        };
        let records = generate(&config).unwrap();
        let summary = describe(&records);
        assert_eq!(summary.per_scenario.len(), 2);
        assert!(summary.per_scenario.values().all(|&c| c > 0));
        // Most users should touch both scenarios over 200 events.
        let mut both = 0;
        for user in 0..config.num_users {
            let scens: std::collections::BTreeSet<u64> = records
                .iter()
                .filter(|r| r.user_id == user)
                .map(|r| r.scenario_id)
                .collect();
            if scens.len() >= 2 {
                both += 1;
            }
        }
        assert!(both as f64 >= 0.9 * config.num_users as f64);
    }

    #[test]
    fn describe_handles_empty_and_counts() {
        assert_eq!(describe(&[]).num_records, 0);
        let records: Vec<InteractionRecord> = (0..10)
            .map(|i| InteractionRecord {
                user_id: 1,
                item_id: i % 3,
                scenario_id: 0,
                behavior: Behavior::Click,
                timestamp: i as i64,
            })
            .collect();
        let s = describe(&records);
        assert_eq!(s.per_behavior.get("click"), Some(&10));
        assert_eq!(s.per_behavior.len(), 1);
        assert_eq!(s.per_user.get(&1), Some(&10));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = base_config();
        c.num_topics = 3; // does not divide 100
        assert!(generate(&c).is_err());
        let mut c = base_config();
        c.shift_probability = 1.5;
        assert!(generate(&c).is_err());
        let mut c = base_config();
        c.scenario_affinity_concentration = 0.0;
        assert!(generate(&c).is_err());
    }
}
