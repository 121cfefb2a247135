//! Versioned checkpoint files: a JSON header (model config, preprocessing
//! settings, tensor layout) followed by little-endian `f64` values.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::imaging::PreprocessSettings;
use crate::model::config::ModelConfig;
use crate::model::deeplab::{build_model, SegmentationModel};
use crate::nn::params::BufferId;

const MAGIC: &[u8; 8] = b"LSEGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub val_loss: Option<f64>,
    pub lesion: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    preprocess: PreprocessSettings,
    meta: CheckpointMeta,
    params: Vec<TensorEntry>,
    buffers: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub model: SegmentationModel,
    pub preprocess: PreprocessSettings,
    pub meta: CheckpointMeta,
}

pub fn save_checkpoint(
    path: &Path,
    model: &SegmentationModel,
    preprocess: &PreprocessSettings,
    meta: &CheckpointMeta,
) -> Result<()> {
    let store = model.store();
    let header = Header {
        version: FORMAT_VERSION,
        model: model.config().clone(),
        preprocess: *preprocess,
        meta: meta.clone(),
        params: store
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        buffers: store
            .buffers()
            .iter()
            .map(|b| TensorEntry {
                name: b.name.clone(),
                shape: vec![b.value.len()],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_path(parent)?;
    }
    let tmp = path.with_extension("partial");
    {
        let file = fs::File::create(&tmp).with_path(&tmp)?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).with_path(&tmp);
        write(MAGIC)?;
        write(&FORMAT_VERSION.to_le_bytes())?;
        write(&(json.len() as u64).to_le_bytes())?;
        write(&json)?;
        for p in store.params() {
            for v in p.value.data() {
                write(&v.to_le_bytes())?;
            }
        }
        for b in store.buffers() {
            for v in &b.value {
                write(&v.to_le_bytes())?;
            }
        }
        w.flush().with_path(&tmp)?;
    }
    fs::rename(&tmp, path).with_path(path)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let slice = bytes
        .get(*at..*at + n)
        .ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
    *at += n;
    Ok(slice)
}

fn read_f64s(bytes: &[u8], at: &mut usize, n: usize) -> Result<Vec<f64>> {
    let raw = take(bytes, at, n * 8)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .with_path(path)?;
    let mut at = 0;
    if take(&bytes, &mut at, 8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut at, 4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(take(&bytes, &mut at, 8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&bytes, &mut at, len)?)?;
    let mut model = build_model(&header.model)?;
    let store = model.store_mut();
    if header.params.len() != store.params().len() || header.buffers.len() != store.buffers().len() {
        return Err(Error::Checkpoint("tensor layout does not match the configured model".into()));
    }
    let ids: Vec<_> = store.ids().collect();
    for (entry, id) in header.params.iter().zip(ids) {
        let p = store.param_mut(id);
        if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter {} {:?} does not match model parameter {} {:?}",
                entry.name,
                entry.shape,
                p.name,
                p.value.shape()
            )));
        }
        let values = read_f64s(&bytes, &mut at, p.value.numel())?;
        p.value.data_mut().copy_from_slice(&values);
    }
    for (i, entry) in header.buffers.iter().enumerate() {
        let id = BufferId(i);
        let n = store.buffer(id).len();
        if store.buffers()[i].name != entry.name || entry.shape != [n] {
            return Err(Error::Checkpoint(format!("buffer {} does not match the model", entry.name)));
        }
        *store.buffer_mut(id) = read_f64s(&bytes, &mut at, n)?;
    }
    if at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(Checkpoint {
        model,
        preprocess: header.preprocess,
        meta: header.meta,
    })
}

/// Loads a checkpoint and refuses it unless its configuration equals `expected`.
pub fn load_checkpoint_expecting(
    path: &Path,
    expected: &ModelConfig,
    expected_preprocess: Option<&PreprocessSettings>,
) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.config() != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint was built with {:?}, expected {:?}",
            ckpt.model.config(),
            expected
        )));
    }
    if let Some(pre) = expected_preprocess {
        if &ckpt.preprocess != pre {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint preprocessing {:?} differs from {:?}",
                ckpt.preprocess, pre
            )));
        }
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn round_trip_preserves_outputs_and_rejects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = ModelConfig { init_seed: 4, ..ModelConfig::tiny(32) };
        let mut model = build_model(&cfg).unwrap();
        *model.store_mut().buffer_mut(BufferId(0)) = vec![0.25; model.store().buffer(BufferId(0)).len()];
        let pre = PreprocessSettings { image_side: 32, ..Default::default() };
        let meta = CheckpointMeta { epoch: Some(3), val_loss: Some(0.2), lesion: Some("EX".into()) };
        save_checkpoint(&path, &model, &pre, &meta).unwrap();
        let back = load_checkpoint_expecting(&path, &cfg, Some(&pre)).unwrap();
        assert_eq!(back.meta, meta);
        let x = Tensor::full(&[1, 32, 32, 3], 0.3);
        assert_eq!(back.model.forward(&x).unwrap(), model.forward(&x).unwrap());

        let other = ModelConfig { aspp_rates: vec![2, 4], ..cfg.clone() };
        assert!(matches!(load_checkpoint_expecting(&path, &other, None), Err(Error::ConfigMismatch(_))));
        let other_pre = PreprocessSettings { image_side: 64, ..pre };
        assert!(matches!(
            load_checkpoint_expecting(&path, &cfg, Some(&other_pre)),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        let model = build_model(&ModelConfig::tiny(32)).unwrap();
        save_checkpoint(&path, &model, &PreprocessSettings::default(), &CheckpointMeta::default()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
