//! Model archives.
//!
//! Layout (little endian):
//!
//! ```text
//! magic     8 bytes "SAAECKPT"
//! version   u32
//! meta_len  u32, then meta_len bytes of JSON (CheckpointMeta)
//! count     u32
//! count x { name_len u32, name bytes, len u64, len f64 values }
//! ```
//!
//! Tensor names are `phi.*`, `eta.*`, `theta.*`, `disc.*` and `guide.*`;
//! batch-norm running statistics are stored like any other tensor.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ModelMeta, SaaeModel};
use crate::nn::Module;
use crate::spectrum::SpectrumGuide;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAAECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelMeta,
    pub guide_bins: usize,
    pub guide_pinned: Option<f64>,
    pub guide_alpha: f64,
}

fn tensors(model: &SaaeModel, guide: &SpectrumGuide) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    model.visit_tensors(&mut |name, values| out.push((name, values.to_vec())));
    guide.visit_tensors("guide", &mut |name, values| out.push((name, values.to_vec())));
    out
}

pub fn write_checkpoint<W: Write>(model: &SaaeModel, guide: &SpectrumGuide, mut out: W) -> Result<()> {
    let meta = CheckpointMeta {
        model: model.meta.clone(),
        guide_bins: guide.bins(),
        guide_pinned: guide.pinned_value(),
        guide_alpha: guide.alpha,
    };
    let meta = serde_json::to_vec(&meta)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    out.write_u32::<LittleEndian>(meta.len() as u32)?;
    out.write_all(&meta)?;
    let list = tensors(model, guide);
    out.write_u32::<LittleEndian>(list.len() as u32)?;
    for (name, values) in list {
        out.write_u32::<LittleEndian>(name.len() as u32)?;
        out.write_all(name.as_bytes())?;
        out.write_u64::<LittleEndian>(values.len() as u64)?;
        for v in values {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(SaaeModel, SpectrumGuide)> {
    let trunc = |_| Error::Format("checkpoint is truncated".into());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(trunc)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = input.read_u32::<LittleEndian>().map_err(trunc)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let meta_len = input.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut meta = vec![0u8; meta_len];
    input.read_exact(&mut meta).map_err(trunc)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta)?;
    let count = input.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut stored: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for _ in 0..count {
        let name_len = input.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name).map_err(trunc)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let len = input.read_u64::<LittleEndian>().map_err(trunc)? as usize;
        let mut values = vec![0.0; len];
        input.read_f64_into::<LittleEndian>(&mut values).map_err(trunc)?;
        stored.insert(name, values);
    }

    let mut model = SaaeModel::build(meta.model.clone(), 0)?;
    let mut guide = match meta.guide_pinned {
        Some(v) => SpectrumGuide::pinned(meta.guide_bins, v),
        None => SpectrumGuide::zeros(meta.guide_bins),
    };
    guide.alpha = meta.guide_alpha;
    let mut problem: Option<Error> = None;
    let mut fill = |name: String, slot: &mut Vec<f64>| match stored.remove(&name) {
        Some(v) if v.len() == slot.len() => *slot = v,
        Some(v) => {
            problem.get_or_insert(Error::Format(format!(
                "tensor {name} has {} values, model expects {}",
                v.len(),
                slot.len()
            )));
        }
        None => {
            problem.get_or_insert(Error::Format(format!("checkpoint lacks tensor {name}")));
        }
    };
    model.visit_tensors_mut(&mut fill);
    guide.visit_tensors_mut("guide", &mut fill);
    if let Some(e) = problem {
        return Err(e);
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Format(format!("checkpoint has unexpected tensor {extra}")));
    }
    Ok((model, guide))
}

pub fn save_checkpoint(model: &SaaeModel, guide: &SpectrumGuide, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, guide, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(SaaeModel, SpectrumGuide)> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, Architecture};
    use rand::SeedableRng;

    #[test]
    fn round_trip_restores_every_tensor() {
        let mut model = build_model(20, 2, 3, 7).unwrap();
        // make running statistics non-default so they are exercised
        model.visit_tensors_mut(&mut |name, v| {
            if name.ends_with("running_mean") {
                v.iter_mut().for_each(|x| *x = 0.25);
            }
        });
        let guide = SpectrumGuide::new(22, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let mut buf = Vec::new();
        write_checkpoint(&model, &guide, &mut buf).unwrap();
        let (m2, g2) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(m2, model);
        assert_eq!(g2, guide);
    }

    #[test]
    fn pinned_guides_and_toy_models_survive() {
        let meta = ModelMeta::new(8, 2, 2, Architecture::toy()).unwrap();
        let model = SaaeModel::build(meta, 3).unwrap();
        let guide = SpectrumGuide::pinned(10, 1.0);
        let mut buf = Vec::new();
        write_checkpoint(&model, &guide, &mut buf).unwrap();
        let (m2, g2) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!((m2, g2.pinned_value()), (model, Some(1.0)));
    }

    #[test]
    fn damaged_archives_are_rejected() {
        let model = build_model(20, 1, 2, 1).unwrap();
        let guide = SpectrumGuide::zeros(11);
        let mut buf = Vec::new();
        write_checkpoint(&model, &guide, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 8]).is_err());
        let mut bad = buf.clone();
        bad[3] = 0;
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Format(_))));
    }
}
