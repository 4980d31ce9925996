//! The assembled model: embedding tables, sequence encoder, twin Q
//! estimators and intent head, all living in one flat parameter vector.

use crate::config::TrainConfig;
use crate::data::Catalog;
use crate::encoder::{build_encoder_layout, EncoderKind, EncoderLayout};
use crate::error::{Error, Result};
use crate::intent::{build_intent_layout, IntentLayout};
use crate::layout::{init_params, InitKind, LayoutBuilder, TensorMeta};
use crate::math::Real;
use crate::qnet::{build_q_layout, QLayout};

/// Structural hyperparameters; everything the parameter layout depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub d: usize,
    pub history_len: usize,
    pub heads: usize,
    pub num_items: u32,
    pub num_scenarios: u32,
    pub encoder: EncoderKind,
    pub kernel_width: usize,
    pub dilations: Vec<usize>,
    pub strict_relu: bool,
}

impl ModelDims {
    pub fn from_config(cfg: &TrainConfig, catalog: &Catalog) -> Result<ModelDims> {
        cfg.validate()?;
        Ok(ModelDims {
            d: cfg.d,
            history_len: cfg.history_len,
            heads: cfg.heads,
            num_items: catalog.num_items,
            num_scenarios: catalog.num_scenarios,
            encoder: cfg.encoder,
            kernel_width: cfg.kernel_width,
            dilations: cfg.dilations.clone(),
            strict_relu: cfg.strict_relu,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ModelLayout {
    pub metas: Vec<TensorMeta>,
    pub total: usize,
    pub emb_item: std::ops::Range<usize>,
    pub emb_scenario: std::ops::Range<usize>,
    pub encoder: EncoderLayout,
    pub q_a: QLayout,
    pub q_b: QLayout,
    pub intent: IntentLayout,
}

pub fn build_layout(dims: &ModelDims) -> Result<ModelLayout> {
    let d = dims.d;
    let mut lb = LayoutBuilder::new();
    // Item table carries the extra trainable padding row; it is masked out
    // of every forward path, so it never receives gradient.
    let emb_item = lb.push(
        "emb.item",
        &[dims.num_items as usize + 1, d],
        InitKind::NormalScaled(d),
    );
    let emb_scenario = lb.push(
        "emb.scenario",
        &[dims.num_scenarios as usize, d],
        InitKind::NormalScaled(d),
    );
    let encoder = build_encoder_layout(
        &mut lb,
        dims.encoder,
        d,
        dims.kernel_width,
        &dims.dilations,
    )?;
    let q_a = build_q_layout(&mut lb, "q.a", d, dims.heads, dims.num_scenarios as usize)?;
    let q_b = build_q_layout(&mut lb, "q.b", d, dims.heads, dims.num_scenarios as usize)?;
    let intent = build_intent_layout(&mut lb, d);
    let (metas, total) = lb.finish();
    Ok(ModelLayout {
        metas,
        total,
        emb_item,
        emb_scenario,
        encoder,
        q_a,
        q_b,
        intent,
    })
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub dims: ModelDims,
    pub layout: ModelLayout,
    pub params: Vec<T>,
}

impl<T: Real> Model<T> {
    /// Initialize all tensors from streams keyed by (seed, tensor name);
    /// the twin estimators get independent sub-streams because their
    /// tensor names differ.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Model<T>> {
        let layout = build_layout(&dims)?;
        let params = init_params(&layout.metas, layout.total, seed);
        Ok(Model {
            dims,
            layout,
            params,
        })
    }

    pub fn from_params(dims: ModelDims, params: Vec<T>) -> Result<Model<T>> {
        let layout = build_layout(&dims)?;
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, layout expects {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Model {
            dims,
            layout,
            params,
        })
    }

    #[inline]
    pub fn item_table(&self) -> &[T] {
        &self.params[self.layout.emb_item.clone()]
    }

    #[inline]
    pub fn scenario_table(&self) -> &[T] {
        &self.params[self.layout.emb_scenario.clone()]
    }

    #[inline]
    pub fn padding_item(&self) -> u32 {
        self.dims.num_items
    }

    pub fn item_row(&self, id: u32) -> &[T] {
        let d = self.dims.d;
        &self.item_table()[id as usize * d..(id as usize + 1) * d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            d: 8,
            history_len: 5,
            heads: 4,
            num_items: 20,
            num_scenarios: 3,
            encoder: EncoderKind::NextItNet,
            kernel_width: 3,
            dilations: vec![1, 2],
            strict_relu: false,
        }
    }

    #[test]
    fn layout_covers_all_tensors_contiguously() {
        let layout = build_layout(&dims()).unwrap();
        let mut cursor = 0;
        for meta in &layout.metas {
            assert_eq!(meta.offset, cursor);
            cursor += meta.len();
        }
        assert_eq!(cursor, layout.total);
        assert_eq!(layout.emb_item.len(), 21 * 8);
    }

    #[test]
    fn twin_estimators_initialize_differently() {
        let model: Model<f64> = Model::init(dims(), 7).unwrap();
        let a = &model.params[model.layout.q_a.wq.clone()];
        let b = &model.params[model.layout.q_b.wq.clone()];
        assert_ne!(a, b);
        // Same seed reproduces everything.
        let model2: Model<f64> = Model::init(dims(), 7).unwrap();
        assert_eq!(model.params, model2.params);
    }

    #[test]
    fn gru_variant_builds() {
        let mut d = dims();
        d.encoder = EncoderKind::Gru;
        let model: Model<f32> = Model::init(d, 1).unwrap();
        assert!(matches!(model.layout.encoder, EncoderLayout::Gru(_)));
    }
}
