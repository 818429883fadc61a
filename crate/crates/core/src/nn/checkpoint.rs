//! `HARMCNN1` model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "HARMCNN1"
//! version      u16
//! meta_len     u32, then meta_len bytes of JSON (CheckpointMeta)
//! tensor_count u32
//! per tensor:  u32 name_len, name (UTF-8), u32 rank, rank x u32 dims,
//!              product(dims) x f32
//! ```
//!
//! Normalization statistics travel as four extra tensors (`norm.*`) so a
//! checkpoint is all that evaluation needs besides the raw signals.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Example, ModelParams, ModelSpec, NnError, Tensor};
use crate::dataset::{ActivityClass, STREAM_ORDER};
use crate::dsp::WelchConfig;
use crate::features::{apply_normalizer, FeatureMatrix, FeatureTensor, NormStats};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HARMCNN1";
pub const CHECKPOINT_VERSION: u16 = 1;

const MAX_NAME_LEN: usize = 1 << 10;
const MAX_RANK: usize = 8;
const MAX_ELEMENTS: usize = 1 << 28;
const NORM_NAMES: [&str; 4] = ["norm.freq_mean", "norm.freq_std", "norm.power_mean", "norm.power_std"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u16,
    pub model: ModelSpec,
    pub welch: WelchConfig,
    pub stream_order: Vec<String>,
    pub classes: Vec<String>,
    pub seed: u64,
    pub epoch: usize,
    pub norm_epsilon: f64,
}

/// Everything needed to turn a raw window into class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub norm_stats: NormStats,
    pub welch: WelchConfig,
    /// Epoch the weights come from (1-based).
    pub epoch: usize,
}

fn malformed(msg: impl Into<String>) -> NnError {
    NnError::Malformed(msg.into())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_tensor<W: Write>(w: &mut W, name: &str, shape: &[usize], data: impl Iterator<Item = f32>) -> Result<(), NnError> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 * shape.iter().product::<usize>());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor<f32>), NnError> {
    let name_len = read_u32(r)? as usize;
    if name_len > MAX_NAME_LEN {
        return Err(malformed(format!("tensor name length {name_len}")));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| malformed("tensor name is not UTF-8"))?;
    let rank = read_u32(r)? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(malformed(format!("tensor {name:?} has rank {rank}")));
    }
    let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let count = match count {
        Some(c) if c > 0 && c <= MAX_ELEMENTS => c,
        _ => return Err(malformed(format!("tensor {name:?} has shape {shape:?}"))),
    };
    let mut bytes = vec![0u8; 4 * count];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((name, Tensor::new(shape, data)?))
}

fn matrix_of(t: Tensor<f32>, name: &str, shape: (usize, usize)) -> Result<FeatureMatrix, NnError> {
    t.expect_shape(&[shape.0, shape.1], name)?;
    Ok(FeatureMatrix {
        rows: shape.0,
        cols: shape.1,
        data: t.into_data().into_iter().map(f64::from).collect(),
    })
}

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            model: self.params.spec().clone(),
            welch: self.welch,
            stream_order: STREAM_ORDER.iter().map(|s| s.to_string()).collect(),
            classes: ActivityClass::ALL.iter().map(|c| c.label().to_string()).collect(),
            seed: self.params.seed(),
            epoch: self.epoch,
            norm_epsilon: self.norm_stats.epsilon,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let meta = serde_json::to_vec(&self.meta()).map_err(|e| malformed(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        let named = self.params.named_tensors();
        w.write_all(&((named.len() + NORM_NAMES.len()) as u32).to_le_bytes())?;
        for (name, t) in named {
            write_tensor(&mut w, &name, t.shape(), t.data().iter().copied())?;
        }
        let s = &self.norm_stats;
        for (name, m) in NORM_NAMES.iter().zip([&s.freq_mean, &s.freq_std, &s.power_mean, &s.power_std]) {
            write_tensor(&mut w, name, &[m.rows, m.cols], m.data.iter().map(|&v| v as f32))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::BadMagic(magic));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != CHECKPOINT_VERSION {
            return Err(NnError::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let meta_len = read_u32(&mut r)? as usize;
        if meta_len > 1 << 20 {
            return Err(malformed(format!("metadata length {meta_len}")));
        }
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta).map_err(|e| malformed(format!("metadata: {e}")))?;
        if meta.stream_order != STREAM_ORDER {
            return Err(malformed(format!("stream order {:?} differs from this build", meta.stream_order)));
        }
        meta.welch.check().map_err(|e| malformed(format!("welch config: {e}")))?;

        let count = read_u32(&mut r)? as usize;
        let mut tensors = HashMap::with_capacity(count);
        for _ in 0..count {
            let (name, t) = read_tensor(&mut r)?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(malformed(format!("duplicate tensor {name:?}")));
            }
        }
        let mut take = |name: &str| tensors.remove(name).ok_or_else(|| NnError::MissingTensor(name.to_owned()));

        let layout = meta.model.param_layout()?;
        let params: Vec<Tensor<f32>> = layout
            .iter()
            .map(|(slot, _)| take(&slot.name()))
            .collect::<Result<_, _>>()?;
        let params = ModelParams::from_tensors(&meta.model, meta.seed, params)?;

        let freq = (meta.model.streams, meta.model.freq_bins);
        let power = (meta.model.streams, meta.model.power_bins);
        let norm_stats = NormStats {
            freq_mean: matrix_of(take(NORM_NAMES[0])?, NORM_NAMES[0], freq)?,
            freq_std: matrix_of(take(NORM_NAMES[1])?, NORM_NAMES[1], freq)?,
            power_mean: matrix_of(take(NORM_NAMES[2])?, NORM_NAMES[2], power)?,
            power_std: matrix_of(take(NORM_NAMES[3])?, NORM_NAMES[3], power)?,
            epsilon: meta.norm_epsilon,
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(malformed(format!("unexpected tensor {extra:?}")));
        }
        Ok(Self {
            params,
            norm_stats,
            welch: meta.welch,
            epoch: meta.epoch,
        })
    }

    /// Normalizes raw features with the stored statistics.
    pub fn example(&self, raw: &FeatureTensor, class: ActivityClass) -> Result<Example<f32>, NnError> {
        let z = apply_normalizer(&raw.round_to_f32(), &self.norm_stats)?;
        Ok(Example::from_features(&z, class.index()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fit_normalizer, DEFAULT_EPSILON};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng) -> FeatureTensor {
        let mut m = |cols: usize| FeatureMatrix {
            rows: 9,
            cols,
            data: (0..9 * cols).map(|_| rng.gen_range(0.0..5.0)).collect(),
        };
        let freq = m(65);
        FeatureTensor { freq, power: m(33) }
    }

    fn sample_checkpoint() -> (Checkpoint, Vec<FeatureTensor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw: Vec<FeatureTensor> = (0..100).map(|_| random_tensor(&mut rng)).collect();
        let stats = fit_normalizer(&raw, DEFAULT_EPSILON).unwrap().round_to_f32();
        let params = ModelParams::<f32>::init(&ModelSpec::default(), 99).unwrap();
        let ckpt = Checkpoint {
            params,
            norm_stats: stats,
            welch: WelchConfig::default(),
            epoch: 17,
        };
        (ckpt, raw)
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_predicts_identically() {
        let (ckpt, raw) = sample_checkpoint();
        let loaded = Checkpoint::read_from(bytes(&ckpt).as_slice()).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.meta().epoch, 17);
        for t in &raw {
            let a = ckpt.params.predict(&ckpt.example(t, ActivityClass::Walking).unwrap()).unwrap();
            let b = loaded.params.predict(&loaded.example(t, ActivityClass::Walking).unwrap()).unwrap();
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let (ckpt, _) = sample_checkpoint();
        let mut buf = bytes(&ckpt);
        buf[0..8].copy_from_slice(b"HARFEAT1");
        assert!(matches!(Checkpoint::read_from(buf.as_slice()), Err(NnError::BadMagic(m)) if &m == b"HARFEAT1"));
    }

    #[test]
    fn rejects_future_version() {
        let (ckpt, _) = sample_checkpoint();
        let mut buf = bytes(&ckpt);
        buf[8..10].copy_from_slice(&2u16.to_le_bytes());
        let err = Checkpoint::read_from(buf.as_slice()).unwrap_err();
        assert!(matches!(err, NnError::UnsupportedVersion { found: 2, supported: 1 }));
        assert!(err.to_string().contains("version 2"));
    }

    #[test]
    fn truncation_is_an_error() {
        let (ckpt, _) = sample_checkpoint();
        let buf = bytes(&ckpt);
        for cut in [4, 9, 20, buf.len() / 2, buf.len() - 1] {
            assert!(Checkpoint::read_from(&buf[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn missing_tensor_is_named() {
        let (ckpt, _) = sample_checkpoint();
        // Rewrite with the last norm tensor dropped.
        let mut buf = Vec::new();
        let meta = serde_json::to_vec(&ckpt.meta()).unwrap();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        let named = ckpt.params.named_tensors();
        buf.extend_from_slice(&((named.len() + 3) as u32).to_le_bytes());
        for (name, t) in named {
            write_tensor(&mut buf, &name, t.shape(), t.data().iter().copied()).unwrap();
        }
        let s = &ckpt.norm_stats;
        for (name, m) in NORM_NAMES.iter().zip([&s.freq_mean, &s.freq_std, &s.power_mean]) {
            write_tensor(&mut buf, name, &[m.rows, m.cols], m.data.iter().map(|&v| v as f32)).unwrap();
        }
        let err = Checkpoint::read_from(buf.as_slice()).unwrap_err();
        assert!(matches!(err, NnError::MissingTensor(ref n) if n == "norm.power_std"), "{err}");
    }
}
