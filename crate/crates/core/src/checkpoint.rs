//! Single-file model checkpoints: a JSON manifest (version, model config,
//! parameter table) followed by little-endian f64 blobs for each parameter's
//! value and optimizer state. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::store::{Param, ParamStore};
use crate::nn::tensor::Tensor;
use crate::policy::{Model, ModelConfig};

const MAGIC: &[u8; 8] = b"SATRECK\n";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    steps: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    model: ModelConfig,
    params: Vec<ParamEntry>,
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let params: Vec<ParamEntry> = model
        .store
        .iter()
        .map(|(name, p)| ParamEntry {
            name: name.clone(),
            shape: p.value.shape.clone(),
            steps: p.steps,
        })
        .collect();
    let manifest = Manifest {
        version: VERSION,
        model: model.cfg.clone(),
        params,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    out.write_all(MAGIC)?;
    out.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&manifest_bytes)?;
    for (_, p) in model.store.iter() {
        for tensor in [&p.value, &p.m, &p.v] {
            for &x in &tensor.data {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a model checkpoint",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes)?;
    let mut manifest_bytes = vec![0u8; u64::from_le_bytes(len_bytes) as usize];
    input.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.version != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }
    let mut store = ParamStore::new();
    let read_tensor = |shape: &[usize], input: &mut BufReader<File>| -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    };
    for entry in &manifest.params {
        let value = read_tensor(&entry.shape, &mut input)?;
        let m = read_tensor(&entry.shape, &mut input)?;
        let v = read_tensor(&entry.shape, &mut input)?;
        let grad = Tensor::zeros(&entry.shape);
        store.insert_raw(
            entry.name.clone(),
            Param {
                value,
                grad,
                m,
                v,
                steps: entry.steps,
            },
        );
    }
    // Writing iterates the store in name order; a manifest out of that order
    // would mean the blobs above were paired with the wrong entries.
    let names: Vec<&String> = store.iter().map(|(n, _)| n).collect();
    let manifest_names: Vec<&String> = manifest.params.iter().map(|e| &e.name).collect();
    if names != manifest_names {
        return Err(Error::Data("checkpoint manifest out of order".into()));
    }
    Model::from_parts(manifest.model, store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> Model {
        Model::new(
            ModelConfig {
                catalog_size: 12,
                embed_dim: 4,
                hidden_dim: 5,
                encoder_hidden: 6,
                head_hidden: vec![5, 3],
                ..Default::default()
            },
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&model.cfg).unwrap(),
            serde_json::to_string(&loaded.cfg).unwrap()
        );
        let bits = |m: &Model| -> Vec<(String, Vec<u64>, Vec<u64>, Vec<u64>, u64)> {
            m.store
                .iter()
                .map(|(n, p)| {
                    (
                        n.clone(),
                        p.value.data.iter().map(|v| v.to_bits()).collect(),
                        p.m.data.iter().map(|v| v.to_bits()).collect(),
                        p.v.data.iter().map(|v| v.to_bits()).collect(),
                        p.steps,
                    )
                })
                .collect()
        };
        assert_eq!(bits(&model), bits(&loaded));
    }

    #[test]
    fn loaded_model_produces_identical_outputs() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let u = model.encode_state(&[], 0).unwrap();
        let u2 = loaded.encode_state(&[], 0).unwrap();
        assert_eq!(
            u.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            u2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(model.policy_probs(&u).unwrap(), loaded.policy_probs(&u2).unwrap());
    }

    #[test]
    fn garbage_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(load_model(&path).is_err());
    }
}
