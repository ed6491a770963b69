//! Checkpoint files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "GFNLVLCK" | version | header length | JSON header
//! tensor count | (name, rank, dims…, f32 values) per tensor
//! model count  | (byte length, mixture model) per model
//! ```
//!
//! Every parameter contributes its value under its own name and its RMSProp
//! accumulator under `name#accum`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condmodel::Gmm;
use crate::games::{Game, Size};
use crate::model::Model;
use crate::numerics::segment::{read_tensor, read_u32, write_tensor, write_u32};
use crate::numerics::{LrGroup, ParamStore, RmsProp};
use crate::training::{Curriculum, ReplayBuffer, TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"GFNLVLCK";
pub const VERSION: u32 = 1;
const ACCUM_SUFFIX: &str = "#accum";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    CondModel(#[from] crate::condmodel::CondModelError),
    #[error(transparent)]
    Training(#[from] crate::training::TrainingError),
}

#[derive(Serialize, Deserialize)]
struct ControlHeader {
    name: String,
    denominator: String,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    group: LrGroup,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    game: Game,
    tileset: String,
    controls: Vec<ControlHeader>,
    config: TrainConfig,
    optimizer: RmsProp,
    iteration: u64,
    trained_sizes: Vec<Size>,
    curriculum: Curriculum,
    params: Vec<ParamHeader>,
    buffer: ReplayBuffer,
}

/// Everything needed to resume training or generate levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub optimizer: RmsProp,
    pub iteration: u64,
    pub curriculum: Curriculum,
    pub buffer: ReplayBuffer,
    pub model: Model,
    /// Condition models fitted on the final replay buffer, per trained size.
    pub gmms: BTreeMap<Size, Gmm>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, gmms: BTreeMap<Size, Gmm>) -> Self {
        Self {
            config: trainer.config.clone(),
            optimizer: trainer.optimizer(),
            iteration: trainer.iteration,
            curriculum: trainer.curriculum.clone(),
            buffer: trainer.buffer.clone(),
            model: trainer.model.clone(),
            gmms,
        }
    }

    pub fn into_trainer(self) -> Result<Trainer, CheckpointError> {
        Ok(Trainer::from_parts(
            self.config,
            self.model,
            self.buffer,
            Some(self.curriculum),
            self.iteration,
        )?)
    }

    pub fn game(&self) -> Game {
        self.config.game
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        let game = self.config.game;
        let header = Header {
            version: VERSION,
            game,
            tileset: game.chars().into_iter().collect(),
            controls: game
                .controls()
                .iter()
                .map(|c| ControlHeader {
                    name: c.name.to_string(),
                    denominator: c.den.to_string(),
                })
                .collect(),
            config: self.config.clone(),
            optimizer: self.optimizer,
            iteration: self.iteration,
            trained_sizes: self.config.sizes.all(),
            curriculum: self.curriculum.clone(),
            params: self
                .model
                .store
                .iter()
                .map(|(_, p)| ParamHeader {
                    name: p.name.clone(),
                    group: p.group,
                })
                .collect(),
            buffer: self.buffer.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, json.len() as u32)?;
        w.write_all(&json)?;
        write_u32(w, (2 * self.model.store.len()) as u32)?;
        for (_, p) in self.model.store.iter() {
            write_tensor(w, &p.name, &p.value)?;
            write_tensor(w, &format!("{}{ACCUM_SUFFIX}", p.name), &p.accum)?;
        }
        write_u32(w, self.gmms.len() as u32)?;
        for gmm in self.gmms.values() {
            let bytes = gmm.to_bytes();
            write_u32(w, bytes.len() as u32)?;
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        out
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = read_u32(r)? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let tileset: String = header.game.chars().into_iter().collect();
        if header.tileset != tileset {
            return Err(CheckpointError::Format(format!(
                "tileset {:?} does not match {}",
                header.tileset, header.game
            )));
        }

        let count = read_u32(r)? as usize;
        if count != 2 * header.params.len() {
            return Err(CheckpointError::Format(format!(
                "{count} tensors for {} parameters",
                header.params.len()
            )));
        }
        let mut store = ParamStore::new();
        for p in &header.params {
            let (name, value) = read_tensor(r)?;
            let (accum_name, accum) = read_tensor(r)?;
            if name != p.name || accum_name != format!("{}{ACCUM_SUFFIX}", p.name) {
                return Err(CheckpointError::Format(format!("expected tensor {}, found {name}", p.name)));
            }
            if accum.shape() != value.shape() {
                return Err(CheckpointError::Format(format!("accumulator shape of {name}")));
            }
            let id = store.insert(name, value, p.group)?;
            store.param_mut(id).accum = accum;
        }
        let model = Model::from_store(store)?;

        let n = read_u32(r)? as usize;
        let mut gmms = BTreeMap::new();
        for _ in 0..n {
            let len = read_u32(r)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            let gmm = Gmm::read(&mut bytes.as_slice())?;
            let size = gmm
                .size
                .ok_or_else(|| CheckpointError::Format("embedded mixture model without a size".into()))?;
            gmms.insert(size, gmm);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            config: header.config,
            optimizer: header.optimizer,
            iteration: header.iteration,
            curriculum: header.curriculum,
            buffer: header.buffer,
            model,
            gmms,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::File {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::File {
            path: path.display().to_string(),
            source,
        })?;
        Self::read(&mut bytes.as_slice())
    }

    /// The embedded model fitted at the trained size closest to `size`.
    pub fn closest_gmm(&self, size: Size) -> Option<(Size, &Gmm)> {
        let sizes: Vec<Size> = self.gmms.keys().copied().collect();
        let s = size.closest(&sizes)?;
        Some((s, &self.gmms[&s]))
    }
}
