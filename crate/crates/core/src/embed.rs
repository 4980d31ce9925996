//! Item and scenario embedding tables, lookups and the fused item+scenario
//! representation.

use crate::error::{Error, Result};
use crate::layout::{init_params, InitKind, LayoutBuilder};
use crate::math::Real;

/// Owned embedding tables. The item table carries one extra row for the
/// padding token (id `num_items`); that row is trainable but every
/// consumer masks padded positions, so its value never reaches a
/// prediction.
#[derive(Debug, Clone)]
pub struct EmbeddingTables<T> {
    pub d: usize,
    pub num_items: usize,
    pub num_scenarios: usize,
    pub item: Vec<T>,
    pub scenario: Vec<T>,
}

/// Initialize both tables with i.i.d. zero-mean entries of scale
/// `1/sqrt(d)`; deterministic given the seed.
pub fn init_tables<T: Real>(
    num_items: usize,
    num_scenarios: usize,
    d: usize,
    seed: u64,
) -> Result<EmbeddingTables<T>> {
    if num_items == 0 || num_scenarios == 0 || d == 0 {
        return Err(Error::Config(
            "embedding sizes must all be >= 1".into(),
        ));
    }
    let mut lb = LayoutBuilder::new();
    lb.push("emb.item", &[num_items + 1, d], InitKind::NormalScaled(d));
    lb.push("emb.scenario", &[num_scenarios, d], InitKind::NormalScaled(d));
    let (metas, total) = lb.finish();
    let flat: Vec<T> = init_params(&metas, total, seed);
    let split = (num_items + 1) * d;
    Ok(EmbeddingTables {
        d,
        num_items,
        num_scenarios,
        item: flat[..split].to_vec(),
        scenario: flat[split..].to_vec(),
    })
}

/// Row `id` of a `rows x d` table stored row-major.
#[inline]
pub fn table_row<T>(table: &[T], d: usize, id: usize) -> &[T] {
    &table[id * d..(id + 1) * d]
}

impl<T: Real> EmbeddingTables<T> {
    pub fn lookup_item(&self, item_id: u32) -> Result<&[T]> {
        let id = item_id as usize;
        if id > self.num_items {
            return Err(Error::Index(format!(
                "item id {item_id} out of range (table has {} rows)",
                self.num_items + 1
            )));
        }
        Ok(table_row(&self.item, self.d, id))
    }

    pub fn lookup_scenario(&self, scenario_id: u32) -> Result<&[T]> {
        let id = scenario_id as usize;
        if id >= self.num_scenarios {
            return Err(Error::Index(format!(
                "scenario id {scenario_id} out of range (table has {} rows)",
                self.num_scenarios
            )));
        }
        Ok(table_row(&self.scenario, self.d, id))
    }
}

/// Fused representation `e_{i+s} = e_i + e_s` (elementwise sum).
pub fn fuse<T: Real>(e_item: &[T], e_scenario: &[T]) -> Result<Vec<T>> {
    if e_item.len() != e_scenario.len() {
        return Err(Error::Shape(format!(
            "fuse length mismatch: {} vs {}",
            e_item.len(),
            e_scenario.len()
        )));
    }
    Ok(e_item
        .iter()
        .zip(e_scenario)
        .map(|(a, b)| *a + *b)
        .collect())
}
