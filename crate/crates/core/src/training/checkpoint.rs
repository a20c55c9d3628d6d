//! Self-describing binary checkpoints.
//!
//! Layout: a fixed magic line, a length-prefixed JSON header (format
//! version, model kind, dims, step, vocabulary, optimizer configuration,
//! generator state, config snapshot, and the tensor table), then each
//! tensor's payload in table order as little-endian f64 — values first,
//! then the two optimizer moments when present. Saving writes a sibling
//! temp file and renames it into place, so a crash never leaves a torn
//! checkpoint behind.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::dims::{ArchitectureKind, ModelDims};
use crate::model::{LidModel, System, Vocab};

use super::optimizer::{Adam, AdamConfig};
use super::TrainingError;

pub const CHECKPOINT_MAGIC: &[u8] = b"#cs-ckpt v1\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointKind {
    System(ArchitectureKind),
    Lid,
}

impl std::fmt::Display for CheckpointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointKind::System(k) => f.write_str(k.as_str()),
            CheckpointKind::Lid => f.write_str("lid"),
        }
    }
}

/// Everything needed to reseat a ChaCha generator mid-stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Optimizer state stored alongside the tensors, aligned index-for-index
/// with the tensor table.
#[derive(Debug, Clone)]
pub struct Moments {
    pub cfg: AdamConfig,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub t: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    /// Per-tensor optimizer update count (zero when no moments are stored).
    t: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: CheckpointKind,
    dims: ModelDims,
    step: u64,
    vocab: Option<Vocab>,
    adam: Option<AdamConfig>,
    rng: RngState,
    config: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub dims: ModelDims,
    pub step: u64,
    pub vocab: Option<Vocab>,
    pub tensors: Vec<(String, Array2<f64>)>,
    pub moments: Option<Moments>,
    pub rng: RngState,
    pub config: serde_json::Value,
}

fn io_err(path: &Path, source: std::io::Error) -> TrainingError {
    TrainingError::Io { path: path.display().to_string(), source }
}

fn collect_tensors(
    store: &crate::nn::store::ParameterStore,
    adam: Option<&Adam>,
) -> (Vec<(String, Array2<f64>)>, Option<Moments>) {
    let tensors: Vec<(String, Array2<f64>)> =
        store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
    let moments = adam.map(|a| Moments {
        cfg: a.cfg,
        m: a.m.clone(),
        v: a.v.clone(),
        t: a.t.clone(),
    });
    (tensors, moments)
}

impl Checkpoint {
    pub fn of_system(
        system: &System,
        step: u64,
        adam: Option<&Adam>,
        rng: &ChaCha8Rng,
        config: serde_json::Value,
    ) -> Checkpoint {
        let (tensors, moments) = collect_tensors(&system.store, adam);
        Checkpoint {
            kind: CheckpointKind::System(system.kind),
            dims: system.dims.clone(),
            step,
            vocab: Some(system.vocab.clone()),
            tensors,
            moments,
            rng: RngState::capture(rng),
            config,
        }
    }

    pub fn of_lid(
        lid: &LidModel,
        step: u64,
        adam: Option<&Adam>,
        rng: &ChaCha8Rng,
        config: serde_json::Value,
    ) -> Checkpoint {
        let (tensors, moments) = collect_tensors(&lid.store, adam);
        Checkpoint {
            kind: CheckpointKind::Lid,
            dims: lid.dims.clone(),
            step,
            vocab: None,
            tensors,
            moments,
            rng: RngState::capture(rng),
            config,
        }
    }

    /// Rebuilds the system this checkpoint describes and seats every saved
    /// tensor (and optimizer state) into it.
    pub fn restore_system(&self) -> Result<(System, Option<Adam>), TrainingError> {
        let CheckpointKind::System(kind) = self.kind else {
            return Err(TrainingError::KindMismatch {
                expected: "a system checkpoint".into(),
                found: self.kind.to_string(),
            });
        };
        let vocab = self.vocab.clone().ok_or_else(|| {
            TrainingError::Corrupt("system checkpoint carries no vocabulary".into())
        })?;
        let mut system = System::build(kind, self.dims.clone(), vocab, 0)?;
        self.seat(&mut system.store)?;
        let adam = self.restore_adam(&system.store)?;
        Ok((system, adam))
    }

    pub fn restore_lid(&self) -> Result<(LidModel, Option<Adam>), TrainingError> {
        if self.kind != CheckpointKind::Lid {
            return Err(TrainingError::KindMismatch {
                expected: "a language-identification checkpoint".into(),
                found: self.kind.to_string(),
            });
        }
        let mut lid = LidModel::build(self.dims.clone(), 0)?;
        self.seat(&mut lid.store)?;
        let adam = self.restore_adam(&lid.store)?;
        Ok((lid, adam))
    }

    fn seat(&self, store: &mut crate::nn::store::ParameterStore) -> Result<(), TrainingError> {
        if store.len() != self.tensors.len() {
            return Err(TrainingError::Corrupt(format!(
                "tensor count mismatch: built {} but checkpoint has {}",
                store.len(),
                self.tensors.len()
            )));
        }
        for (name, value) in &self.tensors {
            let id = store
                .id_by_name(name)
                .ok_or_else(|| TrainingError::UnknownTensor(name.clone()))?;
            if store.value(id).dim() != value.dim() {
                return Err(TrainingError::Corrupt(format!(
                    "tensor {name} has shape {:?} but the architecture wants {:?}",
                    value.dim(),
                    store.value(id).dim()
                )));
            }
            *store.value_mut(id) = value.clone();
        }
        Ok(())
    }

    fn restore_adam(
        &self,
        store: &crate::nn::store::ParameterStore,
    ) -> Result<Option<Adam>, TrainingError> {
        let Some(moments) = &self.moments else { return Ok(None) };
        if moments.m.len() != store.len() || moments.v.len() != store.len() {
            return Err(TrainingError::Corrupt("optimizer moments misaligned".into()));
        }
        Ok(Some(Adam {
            cfg: moments.cfg,
            m: moments.m.clone(),
            v: moments.v.clone(),
            t: moments.t.clone(),
        }))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainingError> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            dims: self.dims.clone(),
            step: self.step,
            vocab: self.vocab.clone(),
            adam: self.moments.as_ref().map(|m| m.cfg),
            rng: self.rng,
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .enumerate()
                .map(|(i, (name, v))| TensorMeta {
                    name: name.clone(),
                    rows: v.nrows(),
                    cols: v.ncols(),
                    t: self.moments.as_ref().map_or(0, |m| m.t[i]),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| TrainingError::Corrupt(format!("header serialization: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for (i, (_, value)) in self.tensors.iter().enumerate() {
            write_array(&mut out, value);
            if let Some(m) = &self.moments {
                write_array(&mut out, &m.m[i]);
                write_array(&mut out, &m.v[i]);
            }
        }
        let file_name = path
            .file_name()
            .ok_or_else(|| TrainingError::Corrupt("checkpoint path has no file name".into()))?
            .to_string_lossy()
            .into_owned();
        let tmp = path.with_file_name(format!("{file_name}.tmp{}", std::process::id()));
        std::fs::write(&tmp, &out).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainingError> {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let mut at = 0usize;
        let magic = take(&bytes, &mut at, CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(TrainingError::Corrupt("not a checkpoint file".into()));
        }
        let len_bytes = take(&bytes, &mut at, 8)?;
        let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
        let header_bytes = take(&bytes, &mut at, header_len)?;
        let header: Header = serde_json::from_slice(header_bytes)
            .map_err(|e| TrainingError::Corrupt(format!("header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(TrainingError::Corrupt(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut m = Vec::new();
        let mut v = Vec::new();
        for meta in &header.tensors {
            tensors.push((meta.name.clone(), read_array(&bytes, &mut at, meta)?));
            if header.adam.is_some() {
                m.push(read_array(&bytes, &mut at, meta)?);
                v.push(read_array(&bytes, &mut at, meta)?);
            }
        }
        if at != bytes.len() {
            return Err(TrainingError::Corrupt("trailing bytes after the last tensor".into()));
        }
        let moments = header.adam.map(|cfg| Moments {
            cfg,
            m,
            v,
            t: header.tensors.iter().map(|meta| meta.t).collect(),
        });
        Ok(Checkpoint {
            kind: header.kind,
            dims: header.dims,
            step: header.step,
            vocab: header.vocab,
            tensors,
            moments,
            rng: header.rng,
            config: header.config,
        })
    }
}

fn write_array(out: &mut Vec<u8>, value: &Array2<f64>) {
    for &x in value.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], TrainingError> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| {
        TrainingError::Corrupt("checkpoint truncated".into())
    })?;
    let slice = &bytes[*at..end];
    *at = end;
    Ok(slice)
}

fn read_array(bytes: &[u8], at: &mut usize, meta: &TensorMeta) -> Result<Array2<f64>, TrainingError> {
    let raw = take(bytes, at, meta.rows * meta.cols * 8)?;
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((meta.rows, meta.cols), data)
        .map_err(|e| TrainingError::Corrupt(format!("tensor {}: {e}", meta.name)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{generate_toy_corpus, SplitSizes, ToyCorpusConfig, SPLIT_DEV_CS};
    use crate::corpus::LanguageTag;
    use crate::model::{prepare_examples, Dropout, JointWeights, ModelDims};
    use crate::nn::tape::Tape;
    use rand::RngCore;

    fn fixture() -> (System, Vec<crate::model::PreparedExample>) {
        let cfg = ToyCorpusConfig {
            vocab_size_per_lang: 5,
            phoneme_dim: 4,
            sentence_len_range: (2, 3),
            stretch_range: (1, 1),
            sizes: SplitSizes {
                train_mono: 4,
                train_cs: 2,
                dev_cs: 3,
                test_cs: 2,
                test_mono: 2,
            },
            seed: 12,
            ..ToyCorpusConfig::default()
        };
        let corpus = generate_toy_corpus(&cfg).unwrap();
        let vocab = Vocab::from_lexicon(&corpus.lexicon).unwrap();
        let dims = ModelDims {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ffn_dim: 16,
            vocab: vocab.len(),
            feature_dim: 4,
            bridge_strides: vec![2],
            dropout: 0.0,
        };
        let examples = prepare_examples(&corpus, SPLIT_DEV_CS, &vocab).unwrap();
        let system =
            System::build(ArchitectureKind::E2EBidirectShared, dims, vocab, 21).unwrap();
        (system, examples)
    }

    fn joint_loss_bits(system: &System, ex: &crate::model::PreparedExample) -> u64 {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let fwd = system
            .forward_joint(
                &mut tape,
                ex,
                LanguageTag::L1,
                JointWeights::default(),
                true,
                8,
                &mut drop,
            )
            .unwrap();
        tape.scalar(fwd.total_loss).to_bits()
    }

    #[test]
    fn a_round_trip_reproduces_the_forward_pass_bit_for_bit() {
        let (system, examples) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.next_u64();
        let adam = Adam::new(AdamConfig::default(), &system.store);
        let before = joint_loss_bits(&system, &examples[0]);
        let config = serde_json::json!({"note": "round trip"});
        let ckpt = Checkpoint::of_system(&system, 17, Some(&adam), &rng, config);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.config["note"], "round trip");
        let (restored, restored_adam) = loaded.restore_system().unwrap();
        assert_eq!(joint_loss_bits(&restored, &examples[0]), before);
        assert_eq!(restored.store.value_hash(), system.store.value_hash());
        assert!(restored_adam.is_some());

        // The reseated generator continues exactly where the saved one was.
        let mut continued = loaded.rng.restore();
        assert_eq!(continued.next_u64(), rng.clone().next_u64());
    }

    #[test]
    fn optimizer_state_survives_the_trip() {
        let (system, _) = fixture();
        let mut adam = Adam::new(AdamConfig::default(), &system.store);
        let mut store = system.store.clone();
        for id in store.ids().collect::<Vec<_>>() {
            store.grad_mut(id).fill(0.5);
        }
        adam.step(&mut store, 1e-3, |_, _| true);
        let rng = ChaCha8Rng::seed_from_u64(0);
        let mut sys = system;
        sys.store = store;
        let ckpt = Checkpoint::of_system(&sys, 1, Some(&adam), &rng, serde_json::Value::Null);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.ckpt");
        ckpt.save(&path).unwrap();
        let (_, restored) = Checkpoint::load(&path).unwrap().restore_system().unwrap();
        let restored = restored.unwrap();
        assert_eq!(restored.t, adam.t);
        for (a, b) in restored.m.iter().zip(adam.m.iter()) {
            assert_eq!(a, b);
        }
        for (a, b) in restored.v.iter().zip(adam.v.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lid_checkpoints_restore_their_own_kind_only() {
        let dims = ModelDims {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ffn_dim: 16,
            vocab: 9,
            feature_dim: 4,
            bridge_strides: vec![1],
            dropout: 0.0,
        };
        let lid = LidModel::build(dims, 3).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(1);
        let ckpt = Checkpoint::of_lid(&lid, 0, None, &rng, serde_json::Value::Null);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lid.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let (restored, none_adam) = loaded.restore_lid().unwrap();
        assert_eq!(restored.store.value_hash(), lid.store.value_hash());
        assert!(none_adam.is_none());
        assert!(matches!(
            loaded.restore_system(),
            Err(TrainingError::KindMismatch { .. })
        ));

        let (system, _) = fixture();
        let sys_ckpt =
            Checkpoint::of_system(&system, 0, None, &rng, serde_json::Value::Null);
        assert!(matches!(sys_ckpt.restore_lid(), Err(TrainingError::KindMismatch { .. })));
    }

    #[test]
    fn corruption_is_detected() {
        let (system, _) = fixture();
        let rng = ChaCha8Rng::seed_from_u64(2);
        let ckpt = Checkpoint::of_system(&system, 3, None, &rng, serde_json::Value::Null);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let truncated = &bytes[..bytes.len() - 9];
        let bad = dir.path().join("truncated.ckpt");
        std::fs::write(&bad, truncated).unwrap();
        assert!(matches!(Checkpoint::load(&bad), Err(TrainingError::Corrupt(_))));

        let not_ckpt = dir.path().join("junk.ckpt");
        std::fs::write(&not_ckpt, b"#cs-trace v1\nnope").unwrap();
        assert!(matches!(Checkpoint::load(&not_ckpt), Err(TrainingError::Corrupt(_))));
    }

    #[test]
    fn saving_leaves_no_temp_files_behind() {
        let (system, _) = fixture();
        let rng = ChaCha8Rng::seed_from_u64(4);
        let ckpt = Checkpoint::of_system(&system, 0, None, &rng, serde_json::Value::Null);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        ckpt.save(&path).unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["model.ckpt".to_string()]);
    }
}
