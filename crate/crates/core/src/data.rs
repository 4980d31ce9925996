//! Interaction-log ingestion: parsing, id densification, sliding-window
//! sequence construction, behavior rewards and train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// The four logged behavior types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Click,
    Follow,
    Like,
    Share,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [
        Behavior::Click,
        Behavior::Follow,
        Behavior::Like,
        Behavior::Share,
    ];

    pub fn parse(s: &str) -> Option<Behavior> {
        match s {
            "click" => Some(Behavior::Click),
            "follow" => Some(Behavior::Follow),
            "like" => Some(Behavior::Like),
            "share" => Some(Behavior::Share),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Behavior::Click => "click",
            Behavior::Follow => "follow",
            Behavior::Like => "like",
            Behavior::Share => "share",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw reward of a behavior: click 1, follow 3, like 3, share 2.
/// Normalization (division by [`MAX_REWARD`]) happens at loss time.
pub fn reward_of(behavior: Behavior) -> f64 {
    match behavior {
        Behavior::Click => 1.0,
        Behavior::Follow => 3.0,
        Behavior::Like => 3.0,
        Behavior::Share => 2.0,
    }
}

/// Largest raw reward; rewards are normalized by this before entering the
/// Q-learning targets so they stay inside the softmax codomain.
pub const MAX_REWARD: f64 = 3.0;

/// One logged user action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: u64,
    pub item_id: u64,
    pub scenario_id: u64,
    pub behavior: Behavior,
    pub timestamp: i64,
}

/// Dense item/scenario universe. Real item ids are `0..num_items`; the
/// padding token is `num_items` (maximum real id plus one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub num_items: u32,
    pub num_scenarios: u32,
}

impl Catalog {
    pub fn new(num_items: u32, num_scenarios: u32) -> Result<Catalog> {
        if num_items == 0 || num_scenarios == 0 {
            return Err(Error::Config(
                "catalog needs at least one item and one scenario".into(),
            ));
        }
        Ok(Catalog {
            num_items,
            num_scenarios,
        })
    }

    #[inline]
    pub fn padding_item_id(&self) -> u32 {
        self.num_items
    }
}

/// A length-H history window plus its target interaction. `next_history_*`
/// is the history shifted left by one with the target appended — the
/// successor state for the Q-learning update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub user_id: u64,
    pub history_items: Vec<u32>,
    pub history_scenarios: Vec<u32>,
    pub target_item: u32,
    pub target_scenario: u32,
    pub reward: f64,
    pub next_history_items: Vec<u32>,
    pub next_history_scenarios: Vec<u32>,
}

/// Logical-field-to-column-name mapping for delimiter-separated logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub user_id: String,
    pub item_id: String,
    pub scenario_id: String,
    pub behavior: String,
    pub timestamp: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            user_id: "user_id".into(),
            item_id: "item_id".into(),
            scenario_id: "scenario_id".into(),
            behavior: "behavior".into(),
            timestamp: "timestamp".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub delimiter: char,
    pub schema: ColumnSchema,
    /// Fail when more than this fraction of data rows is malformed.
    pub max_malformed_fraction: f64,
    /// Optional `[min, max)` timestamp bounds applied as a record-selection
    /// step before any splitting.
    pub time_bounds: Option<(i64, i64)>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: ',',
            schema: ColumnSchema::default(),
            max_malformed_fraction: 0.01,
            time_bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    /// Records sorted by (user_id, timestamp).
    pub records: Vec<InteractionRecord>,
    pub malformed_rows: usize,
    pub total_rows: usize,
}

/// Parse a delimiter-separated interaction log with a header row.
///
/// Malformed rows (wrong field count, unparseable numbers, unknown behavior
/// strings) are skipped and counted; the parse fails if they exceed
/// `max_malformed_fraction` of the data rows. Missing required columns are
/// a schema error.
pub fn parse_interactions<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<ParseOutcome> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line.map_err(|e| Error::Data(format!("read failure: {e}")))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Schema("empty input: missing header row".into())),
        }
    };

    let columns: Vec<String> = header
        .trim_end_matches('\r')
        .split(opts.delimiter)
        .map(|c| c.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))
    };
    let s = &opts.schema;
    let idx_user = find(&s.user_id)?;
    let idx_item = find(&s.item_id)?;
    let idx_scen = find(&s.scenario_id)?;
    let idx_beh = find(&s.behavior)?;
    let idx_ts = find(&s.timestamp)?;
    let needed = 1 + [idx_user, idx_item, idx_scen, idx_beh, idx_ts]
        .into_iter()
        .max()
        .unwrap();

    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for line in lines {
        let line = line.map_err(|e| Error::Data(format!("read failure: {e}")))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let fields: Vec<&str> = line.split(opts.delimiter).map(str::trim).collect();
        if fields.len() < needed {
            malformed += 1;
            continue;
        }
        let parsed = (|| -> Option<InteractionRecord> {
            Some(InteractionRecord {
                user_id: fields[idx_user].parse().ok()?,
                item_id: fields[idx_item].parse().ok()?,
                scenario_id: fields[idx_scen].parse().ok()?,
                behavior: Behavior::parse(fields[idx_beh])?,
                timestamp: fields[idx_ts].parse().ok()?,
            })
        })();
        match parsed {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }

    if total > 0 && (malformed as f64) > opts.max_malformed_fraction * (total as f64) {
        return Err(Error::Data(format!(
            "{malformed} of {total} rows malformed (threshold {:.2}%)",
            opts.max_malformed_fraction * 100.0
        )));
    }

    if let Some((lo, hi)) = opts.time_bounds {
        records.retain(|r| r.timestamp >= lo && r.timestamp < hi);
    }
    records.sort_by_key(|r| (r.user_id, r.timestamp));

    Ok(ParseOutcome {
        records,
        malformed_rows: malformed,
        total_rows: total,
    })
}

/// Parse an interaction log from a file path.
pub fn parse_interactions_file(path: &Path, opts: &ParseOptions) -> Result<ParseOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), opts)
}

/// Densified log: ids remapped to contiguous 0-based ranges, with the
/// dense→raw tables kept for persistence.
#[derive(Debug, Clone)]
pub struct DenseLog {
    pub records: Vec<InteractionRecord>,
    pub catalog: Catalog,
    /// `item_ids[dense] = raw`
    pub item_ids: Vec<u64>,
    /// `scenario_ids[dense] = raw`
    pub scenario_ids: Vec<u64>,
}

/// Remap raw item/scenario ids to dense 0-based ids. Dense ids are assigned
/// in ascending raw-id order, so the mapping depends only on the id set.
pub fn densify_ids(records: &[InteractionRecord]) -> Result<DenseLog> {
    if records.is_empty() {
        return Err(Error::Data("cannot densify an empty log".into()));
    }
    let item_set: BTreeSet<u64> = records.iter().map(|r| r.item_id).collect();
    let scen_set: BTreeSet<u64> = records.iter().map(|r| r.scenario_id).collect();
    let item_ids: Vec<u64> = item_set.into_iter().collect();
    let scenario_ids: Vec<u64> = scen_set.into_iter().collect();
    let item_map: BTreeMap<u64, u64> = item_ids
        .iter()
        .enumerate()
        .map(|(d, &r)| (r, d as u64))
        .collect();
    let scen_map: BTreeMap<u64, u64> = scenario_ids
        .iter()
        .enumerate()
        .map(|(d, &r)| (r, d as u64))
        .collect();
    let records = records
        .iter()
        .map(|r| InteractionRecord {
            item_id: item_map[&r.item_id],
            scenario_id: scen_map[&r.scenario_id],
            ..*r
        })
        .collect();
    let catalog = Catalog::new(item_ids.len() as u32, scenario_ids.len() as u32)?;
    Ok(DenseLog {
        records,
        catalog,
        item_ids,
        scenario_ids,
    })
}

/// Write a dense→raw id map as two-column text (`raw<TAB>dense`).
pub fn write_id_map(path: &Path, dense_to_raw: &[u64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (dense, raw) in dense_to_raw.iter().enumerate() {
        writeln!(w, "{raw}\t{dense}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Build one sliding-window sample per interaction. The first sample of a
/// user has a fully padded history; each later sample's history is the
/// previous history shifted left with the previous target appended.
/// Padded positions carry the padding item token and scenario 0.
pub fn build_sequences(
    records: &[InteractionRecord],
    h: usize,
    catalog: &Catalog,
) -> Result<Vec<SequenceSample>> {
    if h == 0 {
        return Err(Error::Config("history length must be >= 1".into()));
    }
    for w in records.windows(2) {
        if (w[1].user_id, w[1].timestamp) < (w[0].user_id, w[0].timestamp) {
            return Err(Error::Data(
                "records must be sorted by (user_id, timestamp)".into(),
            ));
        }
    }
    let pad = catalog.padding_item_id();
    let mut samples = Vec::with_capacity(records.len());
    let mut i = 0usize;
    while i < records.len() {
        let user = records[i].user_id;
        let mut items = vec![pad; h];
        let mut scens = vec![0u32; h];
        while i < records.len() && records[i].user_id == user {
            let r = &records[i];
            if r.item_id >= catalog.num_items as u64 {
                return Err(Error::Data(format!(
                    "item id {} out of range (catalog has {} items)",
                    r.item_id, catalog.num_items
                )));
            }
            if r.scenario_id >= catalog.num_scenarios as u64 {
                return Err(Error::Data(format!(
                    "scenario id {} out of range (catalog has {} scenarios)",
                    r.scenario_id, catalog.num_scenarios
                )));
            }
            let target_item = r.item_id as u32;
            let target_scenario = r.scenario_id as u32;
            let mut next_items = items.clone();
            let mut next_scens = scens.clone();
            next_items.rotate_left(1);
            next_scens.rotate_left(1);
            next_items[h - 1] = target_item;
            next_scens[h - 1] = target_scenario;
            samples.push(SequenceSample {
                user_id: user,
                history_items: items.clone(),
                history_scenarios: scens.clone(),
                target_item,
                target_scenario,
                reward: reward_of(r.behavior),
                next_history_items: next_items.clone(),
                next_history_scenarios: next_scens.clone(),
            });
            items = next_items;
            scens = next_scens;
            i += 1;
        }
    }
    Ok(samples)
}

/// Leave-one-out split: each user's chronologically last sample goes to
/// test; users with a single sample contribute to train only.
pub fn split_leave_one_out(
    samples: Vec<SequenceSample>,
) -> (Vec<SequenceSample>, Vec<SequenceSample>) {
    let mut train = Vec::with_capacity(samples.len());
    let mut test = Vec::new();
    let mut i = 0usize;
    let n = samples.len();
    while i < n {
        let user = samples[i].user_id;
        let mut j = i;
        while j < n && samples[j].user_id == user {
            j += 1;
        }
        if j - i >= 2 {
            train.extend(samples[i..j - 1].iter().cloned());
            test.push(samples[j - 1].clone());
        } else {
            train.push(samples[i].clone());
        }
        i = j;
    }
    (train, test)
}

/// Keep all records of a uniform random subset of `min(n, #users)` users.
/// Relative record order is preserved; deterministic given the seed.
pub fn sample_users(records: &[InteractionRecord], n: usize, seed: u64) -> Vec<InteractionRecord> {
    let users: BTreeSet<u64> = records.iter().map(|r| r.user_id).collect();
    let users: Vec<u64> = users.into_iter().collect();
    if n >= users.len() {
        return records.to_vec();
    }
    let mut rng = stream(seed, "sample_users", &[]);
    let picked = rand::seq::index::sample(&mut rng, users.len(), n);
    let keep: HashSet<u64> = picked.into_iter().map(|i| users[i]).collect();
    records
        .iter()
        .filter(|r| keep.contains(&r.user_id))
        .copied()
        .collect()
}

/// Serialize samples as one JSON object per line.
pub fn write_samples_jsonl(path: &Path, samples: &[SequenceSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples_jsonl(path: &Path) -> Result<Vec<SequenceSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Data(e.to_string()))?);
    }
    Ok(out)
}

/// Write records in the CSV layout `parse_interactions` reads back with the
/// default schema.
pub fn write_records_csv(path: &Path, records: &[InteractionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "user_id,item_id,scenario_id,behavior,timestamp").map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.user_id, r.item_id, r.scenario_id, r.behavior, r.timestamp
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(user: u64, item: u64, scen: u64, b: Behavior, ts: i64) -> InteractionRecord {
        InteractionRecord {
            user_id: user,
            item_id: item,
            scenario_id: scen,
            behavior: b,
            timestamp: ts,
        }
    }

    #[test]
    fn rewards_match_the_table() {
        assert_eq!(reward_of(Behavior::Click), 1.0);
        assert_eq!(reward_of(Behavior::Follow), 3.0);
        assert_eq!(reward_of(Behavior::Like), 3.0);
        assert_eq!(reward_of(Behavior::Share), 2.0);
    }

    #[test]
    fn parse_maps_fields_directly() {
        let input = "user_id,item_id,scenario_id,behavior,timestamp\n7,42,1,click,1684700000\n";
        let out = parse_interactions(Cursor::new(input), &ParseOptions::default()).unwrap();
        assert_eq!(out.records, vec![rec(7, 42, 1, Behavior::Click, 1684700000)]);
        assert_eq!(out.malformed_rows, 0);
    }

    #[test]
    fn parse_empty_file_with_header_is_empty() {
        let input = "user_id,item_id,scenario_id,behavior,timestamp\n";
        let out = parse_interactions(Cursor::new(input), &ParseOptions::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.total_rows, 0);
    }

    #[test]
    fn parse_counts_unknown_behavior_as_rejection() {
        let input = "user_id,item_id,scenario_id,behavior,timestamp\n\
                     1,1,0,click,10\n\
                     1,2,0,hover,11\n\
                     1,3,0,like,12\n\
                     2,4,1,share,13\n";
        let mut opts = ParseOptions::default();
        opts.max_malformed_fraction = 0.5;
        let out = parse_interactions(Cursor::new(input), &opts).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.malformed_rows, 1);
        assert_eq!(out.total_rows, 4);
    }

    #[test]
    fn parse_fails_above_malformed_threshold() {
        let input = "user_id,item_id,scenario_id,behavior,timestamp\n\
                     1,1,0,hover,10\n\
                     1,2,0,click,11\n";
        let err = parse_interactions(Cursor::new(input), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn parse_missing_column_is_schema_error() {
        let input = "user_id,item_id,scenario_id,timestamp\n";
        let err = parse_interactions(Cursor::new(input), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn parse_respects_schema_and_delimiter() {
        let input = "u|i|s|b|t\n3|9|0|follow|5\n";
        let opts = ParseOptions {
            delimiter: '|',
            schema: ColumnSchema {
                user_id: "u".into(),
                item_id: "i".into(),
                scenario_id: "s".into(),
                behavior: "b".into(),
                timestamp: "t".into(),
            },
            ..ParseOptions::default()
        };
        let out = parse_interactions(Cursor::new(input), &opts).unwrap();
        assert_eq!(out.records, vec![rec(3, 9, 0, Behavior::Follow, 5)]);
    }

    #[test]
    fn parse_applies_time_bounds_before_anything_else() {
        let input = "user_id,item_id,scenario_id,behavior,timestamp\n\
                     1,1,0,click,10\n\
                     1,2,0,click,20\n\
                     1,3,0,click,30\n";
        let opts = ParseOptions {
            time_bounds: Some((15, 30)),
            ..ParseOptions::default()
        };
        let out = parse_interactions(Cursor::new(input), &opts).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].item_id, 2);
    }

    #[test]
    fn single_interaction_gets_fully_padded_history() {
        let catalog = Catalog::new(100, 4).unwrap();
        let records = vec![rec(1, 42, 1, Behavior::Click, 100)];
        let samples = build_sequences(&records, 4, &catalog).unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        let pad = catalog.padding_item_id();
        assert_eq!(s.history_items, vec![pad; 4]);
        assert_eq!(s.history_scenarios, vec![0; 4]);
        assert_eq!(s.target_item, 42);
        assert_eq!(s.target_scenario, 1);
        assert_eq!(s.reward, reward_of(Behavior::Click));
        assert_eq!(s.next_history_items, vec![pad, pad, pad, 42]);
    }

    #[test]
    fn sliding_window_shifts_left_and_appends() {
        let catalog = Catalog::new(100, 4).unwrap();
        let records = vec![
            rec(1, 5, 0, Behavior::Click, 100),
            rec(1, 6, 1, Behavior::Like, 101),
        ];
        let samples = build_sequences(&records, 2, &catalog).unwrap();
        assert_eq!(samples.len(), 2);
        let pad = catalog.padding_item_id();
        assert_eq!(samples[1].history_items, vec![pad, 5]);
        assert_eq!(samples[1].history_scenarios, vec![0, 0]);
        assert_eq!(samples[1].target_item, 6);
        assert_eq!(samples[1].next_history_items, vec![5, 6]);
        assert_eq!(samples[1].next_history_scenarios, vec![0, 1]);
    }

    #[test]
    fn zero_records_build_empty() {
        let catalog = Catalog::new(10, 2).unwrap();
        assert!(build_sequences(&[], 4, &catalog).unwrap().is_empty());
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let catalog = Catalog::new(10, 2).unwrap();
        let records = vec![
            rec(1, 1, 0, Behavior::Click, 200),
            rec(1, 2, 0, Behavior::Click, 100),
        ];
        assert!(build_sequences(&records, 2, &catalog).is_err());
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let catalog = Catalog::new(10, 2).unwrap();
        let records = vec![rec(1, 10, 0, Behavior::Click, 1)];
        assert!(build_sequences(&records, 2, &catalog).is_err());
        let records = vec![rec(1, 1, 2, Behavior::Click, 1)];
        assert!(build_sequences(&records, 2, &catalog).is_err());
    }

    #[test]
    fn leave_one_out_counts() {
        let catalog = Catalog::new(50, 2).unwrap();
        let mut records = Vec::new();
        for u in 0..3u64 {
            for t in 0..3i64 {
                records.push(rec(u, u * 3 + t as u64, 0, Behavior::Click, t));
            }
        }
        let samples = build_sequences(&records, 4, &catalog).unwrap();
        let (train, test) = split_leave_one_out(samples);
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 3);
        // Five samples for one user: four train, one (latest) test.
        let recs5: Vec<_> = (0..5).map(|t| rec(9, t as u64, 0, Behavior::Click, t)).collect();
        let samples5 = build_sequences(&recs5, 4, &catalog).unwrap();
        let (tr5, te5) = split_leave_one_out(samples5);
        assert_eq!((tr5.len(), te5.len()), (4, 1));
        assert_eq!(te5[0].target_item, 4);
        // A single-sample user contributes train only.
        let samples1 =
            build_sequences(&[rec(7, 1, 0, Behavior::Click, 1)], 4, &catalog).unwrap();
        let (tr1, te1) = split_leave_one_out(samples1);
        assert_eq!((tr1.len(), te1.len()), (1, 0));
    }

    #[test]
    fn sample_users_saturates_and_is_stable() {
        let records: Vec<_> = (0..2u64)
            .flat_map(|u| (0..3i64).map(move |t| rec(u, t as u64, 0, Behavior::Click, t)))
            .collect();
        let all = sample_users(&records, 10, 1);
        assert_eq!(all, records);
        let one_a = sample_users(&records, 1, 7);
        let one_b = sample_users(&records, 1, 7);
        assert_eq!(one_a, one_b);
        assert_eq!(one_a.len(), 3);
        let users: BTreeSet<u64> = one_a.iter().map(|r| r.user_id).collect();
        assert_eq!(users.len(), 1);
    }

    #[test]
    fn densify_assigns_contiguous_ids_in_raw_order() {
        let records = vec![
            rec(1, 100, 7, Behavior::Click, 1),
            rec(1, 5, 3, Behavior::Like, 2),
            rec(2, 100, 3, Behavior::Share, 3),
        ];
        let dense = densify_ids(&records).unwrap();
        assert_eq!(dense.catalog.num_items, 2);
        assert_eq!(dense.catalog.num_scenarios, 2);
        assert_eq!(dense.item_ids, vec![5, 100]);
        assert_eq!(dense.scenario_ids, vec![3, 7]);
        assert_eq!(dense.records[0].item_id, 1);
        assert_eq!(dense.records[0].scenario_id, 1);
        assert_eq!(dense.records[1].item_id, 0);
    }

    #[test]
    fn jsonl_round_trip_preserves_samples() {
        let catalog = Catalog::new(20, 2).unwrap();
        let records = vec![
            rec(1, 3, 0, Behavior::Click, 1),
            rec(1, 4, 1, Behavior::Share, 2),
        ];
        let samples = build_sequences(&records, 3, &catalog).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        write_samples_jsonl(&path, &samples).unwrap();
        let back = read_samples_jsonl(&path).unwrap();
        assert_eq!(samples, back);
        // Field names are part of the interface.
        let text = std::fs::read_to_string(&path).unwrap();
        for field in [
            "user_id",
            "history_items",
            "history_scenarios",
            "target_item",
            "target_scenario",
            "reward",
            "next_history_items",
            "next_history_scenarios",
        ] {
            assert!(text.contains(field), "missing field {field}");
        }
    }

    #[test]
    fn records_csv_round_trip() {
        let records = vec![
            rec(1, 3, 0, Behavior::Click, 1),
            rec(2, 4, 1, Behavior::Follow, 2),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records_csv(&path, &records).unwrap();
        let out = parse_interactions_file(&path, &ParseOptions::default()).unwrap();
        assert_eq!(out.records, records);
    }
}
