//! Checkpoint container: versioned header, config as UTF-8 key=value text,
//! a named-tensor manifest and raw little-endian f32 payloads. Round trips
//! are bitwise exact, which is what makes mid-run resume equivalent to an
//! uninterrupted run.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::{parse_kv_text, render_section, TrainConfig};
use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::model::{build_layout, Model, ModelDims};
use crate::train::{Adam, TrainState};

pub const MAGIC: [u8; 4] = *b"RUIE";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub num_items: u32,
    pub num_scenarios: u32,
    /// Epochs completed when the checkpoint was written.
    pub epoch: u32,
    pub adam_t: u64,
    pub params: Vec<f32>,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            config: config.clone(),
            num_items: state.model.dims.num_items,
            num_scenarios: state.model.dims.num_scenarios,
            epoch: state.epoch,
            adam_t: state.adam.t,
            params: state.model.params.clone(),
            adam_m: state.adam.m.clone(),
            adam_v: state.adam.v.clone(),
        }
    }

    pub fn catalog(&self) -> Result<Catalog> {
        Catalog::new(self.num_items, self.num_scenarios)
    }

    pub fn into_state(self) -> Result<TrainState> {
        let catalog = self.catalog()?;
        let dims = ModelDims::from_config(&self.config, &catalog)?;
        let model = Model::from_params(dims, self.params)?;
        let mut adam = Adam::new(model.layout.total);
        if self.adam_m.len() != adam.m.len() || self.adam_v.len() != adam.v.len() {
            return Err(Error::Checkpoint(
                "optimizer state size does not match the model layout".into(),
            ));
        }
        adam.m = self.adam_m;
        adam.v = self.adam_v;
        adam.t = self.adam_t;
        Ok(TrainState {
            model,
            adam,
            epoch: self.epoch,
        })
    }
}

fn meta_text(ckpt: &Checkpoint) -> String {
    let mut text = ckpt.config.to_kv_text();
    text.push('\n');
    text.push_str(&render_section(
        "state",
        &[
            ("epoch".into(), ckpt.epoch.to_string()),
            ("adam_t".into(), ckpt.adam_t.to_string()),
            ("num_items".into(), ckpt.num_items.to_string()),
            ("num_scenarios".into(), ckpt.num_scenarios.to_string()),
        ],
    ));
    text
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let meta = meta_text(ckpt);
    w.write_all(&(meta.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(meta.as_bytes()).map_err(io_err)?;

    // Manifest: model tensors from the layout plus the optimizer moments.
    let catalog = ckpt.catalog()?;
    let dims = ModelDims::from_config(&ckpt.config, &catalog)?;
    let layout = build_layout(&dims)?;
    if layout.total != ckpt.params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {} does not match layout total {}",
            ckpt.params.len(),
            layout.total
        )));
    }
    let mut names: Vec<(String, Vec<usize>, &[f32])> = layout
        .metas
        .iter()
        .map(|m| {
            (
                m.name.clone(),
                m.shape.clone(),
                &ckpt.params[m.range()],
            )
        })
        .collect();
    names.push(("opt.adam_m".into(), vec![layout.total], &ckpt.adam_m[..]));
    names.push(("opt.adam_v".into(), vec![layout.total], &ckpt.adam_v[..]));

    w.write_all(&(names.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, shape, _) in &names {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
        w.write_all(&[DTYPE_F32, shape.len() as u8]).map_err(io_err)?;
        for &dim in shape {
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
        }
    }
    for (_, _, payload) in &names {
        for &x in *payload {
            w.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "header")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}: not a checkpoint file or corrupt"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let meta_len = read_u32(&mut r, "meta length")? as usize;
    let mut meta = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta, "meta block")?;
    let meta = String::from_utf8(meta)
        .map_err(|e| Error::Checkpoint(format!("meta block is not UTF-8: {e}")))?;
    let config = TrainConfig::from_kv_text(&meta)?;
    let sections = parse_kv_text(&meta)?;
    let state = sections
        .get("state")
        .ok_or_else(|| Error::Checkpoint("missing [state] section".into()))?;
    let get = |key: &str| -> Result<&String> {
        state
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing state key '{key}'")))
    };
    let epoch: u32 = get("epoch")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad epoch".into()))?;
    let adam_t: u64 = get("adam_t")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad adam_t".into()))?;
    let num_items: u32 = get("num_items")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad num_items".into()))?;
    let num_scenarios: u32 = get("num_scenarios")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad num_scenarios".into()))?;

    let catalog = Catalog::new(num_items, num_scenarios)?;
    let dims = ModelDims::from_config(&config, &catalog)?;
    let layout = build_layout(&dims)?;

    let tensor_count = read_u32(&mut r, "tensor count")? as usize;
    let expected = layout.metas.len() + 2;
    if tensor_count != expected {
        return Err(Error::Checkpoint(format!(
            "manifest has {tensor_count} tensors, layout expects {expected}"
        )));
    }
    let mut manifest = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let mut len_b = [0u8; 2];
        read_exact(&mut r, &mut len_b, "tensor name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(len_b) as usize];
        read_exact(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::Checkpoint(format!("tensor name not UTF-8: {e}")))?;
        let mut hdr = [0u8; 2];
        read_exact(&mut r, &mut hdr, "tensor header")?;
        if hdr[0] != DTYPE_F32 {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' has unsupported dtype {}",
                hdr[0]
            )));
        }
        let mut shape = Vec::with_capacity(hdr[1] as usize);
        for _ in 0..hdr[1] {
            shape.push(read_u32(&mut r, "tensor dim")? as usize);
        }
        manifest.push((name, shape));
    }
    // Validate the manifest against the layout rebuilt from the config.
    for (meta, (name, shape)) in layout.metas.iter().zip(&manifest) {
        if &meta.name != name || &meta.shape != shape {
            return Err(Error::Checkpoint(format!(
                "manifest tensor '{name}' {shape:?} does not match expected '{}' {:?}",
                meta.name, meta.shape
            )));
        }
    }
    for (name, shape) in &manifest[layout.metas.len()..] {
        if shape != &vec![layout.total] || !name.starts_with("opt.adam_") {
            return Err(Error::Checkpoint(format!(
                "unexpected optimizer tensor '{name}' {shape:?}"
            )));
        }
    }

    let mut read_payload = |len: usize, what: &str| -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; len * 4];
        read_exact(&mut r, &mut bytes, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let params = read_payload(layout.total, "parameters")?;
    let adam_m = read_payload(layout.total, "adam_m")?;
    let adam_v = read_payload(layout.total, "adam_v")?;

    Ok(Checkpoint {
        config,
        num_items,
        num_scenarios,
        epoch,
        adam_t,
        params,
        adam_m,
        adam_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderKind;

    fn sample_checkpoint() -> Checkpoint {
        let config = TrainConfig {
            d: 8,
            history_len: 5,
            heads: 2,
            dilations: vec![1, 2],
            encoder: EncoderKind::NextItNet,
            ..TrainConfig::default()
        };
        let catalog = Catalog::new(10, 2).unwrap();
        let dims = ModelDims::from_config(&config, &catalog).unwrap();
        let model = Model::<f32>::init(dims, 3).unwrap();
        let total = model.layout.total;
        Checkpoint {
            config,
            num_items: 10,
            num_scenarios: 2,
            epoch: 4,
            adam_t: 123,
            params: model.params,
            adam_m: (0..total).map(|i| i as f32 * 0.5).collect(),
            adam_v: (0..total).map(|i| i as f32 * 0.25).collect(),
        }
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ruie");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, ckpt.params);
        assert_eq!(back.adam_m, ckpt.adam_m);
        assert_eq!(back.adam_v, ckpt.adam_v);
        assert_eq!(back.epoch, 4);
        assert_eq!(back.adam_t, 123);
        assert_eq!(back.config, ckpt.config);
        assert_eq!((back.num_items, back.num_scenarios), (10, 2));
    }

    #[test]
    fn flipped_magic_is_a_corrupt_file_error() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ruie");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ruie");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn state_round_trip_restores_the_model() {
        let ckpt = sample_checkpoint();
        let params = ckpt.params.clone();
        let state = ckpt.clone().into_state().unwrap();
        assert_eq!(state.model.params, params);
        assert_eq!(state.epoch, 4);
        assert_eq!(state.adam.t, 123);
        let back = Checkpoint::from_state(&state, &ckpt.config);
        assert_eq!(back.params, ckpt.params);
    }
}
