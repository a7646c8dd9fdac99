//! Self-describing checkpoint container: a versioned JSON header (model
//! config, tokenizer vocabulary, label names, encoding options) followed by
//! a named tensor table with row-major 32-bit float data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use super::{ModelConfig, ModelParams};
use crate::dataset::EncodeOptions;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TMCKPT01";
const VERSION: u32 = 1;

/// Everything needed to run the model stand-alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub tokenizer_tokens: Vec<String>,
    pub labels: Vec<String>,
    pub encode: EncodeOptions,
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let meta_bytes = serde_json::to_vec(meta)
        .map_err(|e| Error::invalid("checkpoint meta", e.to_string()))?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&meta_bytes).map_err(io_err)?;

    let tensors = params.visit();
    w.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        w.write_all(&(tensor.rows as u64).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(tensor.cols as u64).to_le_bytes()).map_err(io_err)?;
        for &v in &tensor.data {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::invalid("checkpoint", "bad magic bytes"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(io_err)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::invalid(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).map_err(io_err)?;
    let meta_len = u64::from_le_bytes(buf8) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(io_err)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::invalid("checkpoint meta", e.to_string()))?;

    let mut params = ModelParams::zeros(&meta.config);
    r.read_exact(&mut buf4).map_err(io_err)?;
    let n_tensors = u32::from_le_bytes(buf4) as usize;

    let mut loaded: Vec<(String, Matrix)> = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let mut buf2 = [0u8; 2];
        r.read_exact(&mut buf2).map_err(io_err)?;
        let name_len = u16::from_le_bytes(buf2) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::invalid("checkpoint", format!("bad tensor name: {e}")))?;
        r.read_exact(&mut buf8).map_err(io_err)?;
        let rows = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8).map_err(io_err)?;
        let cols = u64::from_le_bytes(buf8) as usize;
        let mut tensor = Matrix::zeros(rows, cols);
        let mut f32buf = [0u8; 4];
        for v in &mut tensor.data {
            r.read_exact(&mut f32buf).map_err(io_err)?;
            *v = f32::from_le_bytes(f32buf) as f64;
        }
        loaded.push((name, tensor));
    }

    let mut slots = params.visit_mut();
    if slots.len() != loaded.len() {
        return Err(Error::invalid(
            "checkpoint",
            format!("expected {} tensors, found {}", slots.len(), loaded.len()),
        ));
    }
    for ((expected_name, slot), (name, tensor)) in slots.iter_mut().zip(loaded) {
        if *expected_name != name {
            return Err(Error::invalid(
                "checkpoint",
                format!("tensor {name:?} out of place, expected {expected_name:?}"),
            ));
        }
        if slot.rows != tensor.rows || slot.cols != tensor.cols {
            return Err(Error::invalid(
                "checkpoint",
                format!(
                    "tensor {name:?} has shape {}x{}, expected {}x{}",
                    tensor.rows, tensor.cols, slot.rows, slot.cols
                ),
            ));
        }
        **slot = tensor;
    }
    drop(slots);
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EncodedInstance;
    use crate::model::{forward_batch, init_model, ModelConfig, MIN_MAX_LEN};

    fn meta(config: &ModelConfig) -> CheckpointMeta {
        CheckpointMeta {
            config: config.clone(),
            tokenizer_tokens: vec!["[PAD]".into(), "[UNK]".into()],
            labels: vec!["[A]".into(), "[B]".into()],
            encode: EncodeOptions::default(),
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let config = ModelConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            ff_dim: 16,
            max_len: MIN_MAX_LEN,
            vocab_size: 16,
            label_count: 4,
            dropout: 0.0,
        };
        let params = init_model(&config, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params, &meta(&config)).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded_meta.labels.len(), 2);

        let batch = vec![EncodedInstance {
            token_ids: vec![2, 7, 9, 3],
            segment_ids: vec![0, 0, 1, 1],
            label_id: 0,
            adversarial: false,
        }];
        let a = forward_batch(&params, &batch).unwrap();
        let b = forward_batch(&loaded, &batch).unwrap();
        for (x, y) in a.h_cls.data.iter().zip(&b.h_cls.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }

        // saving the loaded params reproduces the same bytes
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &loaded, &meta(&config)).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
