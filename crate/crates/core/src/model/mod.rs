//! Recurrent auto-regressive forward policy and per-size source-flow heads.
//!
//! Levels are emitted one tile per step along a snake-shaped scan. The policy
//! sees a condition embedding, the previous tile and a row-change flag, and runs
//! two stacked GRUs before the action head. Every forward pass is recorded on a
//! [`Tape`], so sampling and teacher forcing share one code path and produce
//! bit-identical log-probabilities.

use std::collections::BTreeMap;

use rand::Rng;

use crate::games::{Level, Size};
use crate::numerics::{
    ff_forward, Activation, GruCell, Init, Linear, LrGroup, NodeId, NumericsError, ParamStore, Tape, Tensor,
};

pub const HIDDEN: usize = 128;
pub const EMBED_HIDDEN: usize = 16;
pub const EMBED: usize = 32;
pub const HEAD_HIDDEN: usize = 32;
pub const FLOW_HIDDEN: usize = 32;
/// Scale applied to width and height before they enter the network.
pub const SIZE_SCALE: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("expected {expected} condition values, got {got}")]
    Conditions { expected: usize, got: usize },
    #[error("no flow head for size {0}")]
    MissingFlowHead(Size),
    #[error("level is {got}, expected {expected}")]
    LevelSize { expected: Size, got: Size },
    #[error("level tile {tile} outside the policy's {tiles}-tile alphabet")]
    Tile { tile: u8, tiles: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Cells in generation order: even rows left to right, odd rows right to left.
pub fn scan_order(w: usize, h: usize) -> Vec<(usize, usize)> {
    (0..h)
        .flat_map(|r| {
            (0..w).map(move |i| if r % 2 == 0 { (r, i) } else { (r, w - 1 - i) })
        })
        .collect()
}

/// Whether step `index` (0-based) starts a new row.
pub fn row_changed(index: usize, w: usize) -> bool {
    index > 0 && index.is_multiple_of(w)
}

/// `[one-hot(prev) over |A|+1 slots ‖ flag]`; `None` selects the BOS slot.
fn step_features(num_tiles: usize, prev: Option<u8>, changed: bool, out: &mut [f64]) {
    out.fill(0.0);
    out[prev.map_or(num_tiles, usize::from)] = 1.0;
    out[num_tiles + 1] = f64::from(u8::from(changed));
}

/// Recurrent input of one step: `[embedding ‖ one-hot(prev) ‖ row_changed]`.
pub fn step_input(embedding: &[f64], num_tiles: usize, prev: Option<u8>, changed: bool) -> Vec<f64> {
    let mut v = embedding.to_vec();
    let mut f = vec![0.0; num_tiles + 2];
    step_features(num_tiles, prev, changed, &mut f);
    v.extend_from_slice(&f);
    v
}

/// Network input shared by the embedding and the flow heads: `[u ‖ w/10 ‖ h/10]`.
pub fn condition_features(u: &[f64], size: Size) -> Vec<f64> {
    let mut v = u.to_vec();
    v.push(size.w as f64 * SIZE_SCALE);
    v.push(size.h as f64 * SIZE_SCALE);
    v
}

/// Parameter handles of the forward policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyNet {
    pub num_tiles: usize,
    pub num_controls: usize,
    embed0: Linear,
    embed1: Linear,
    gru1: GruCell,
    gru2: GruCell,
    head0: Linear,
    head1: Linear,
}

impl PolicyNet {
    fn step_width(num_tiles: usize) -> usize {
        EMBED + num_tiles + 2
    }

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        num_tiles: usize,
        num_controls: usize,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let p = LrGroup::Policy;
        let x = Self::step_width(num_tiles);
        let embed0 = Linear::new(store, "embed.0", num_controls + 2, EMBED_HIDDEN, Init::Uniform, p, rng)?;
        let embed1 = Linear::new(store, "embed.1", EMBED_HIDDEN, EMBED, Init::Uniform, p, rng)?;
        let gru1 = GruCell::new(store, "gru1", x, HIDDEN, p, rng)?;
        let gru2 = GruCell::new(store, "gru2", x + HIDDEN, HIDDEN, p, rng)?;
        let head0 = Linear::new(store, "head.0", x + 2 * HIDDEN, HEAD_HIDDEN, Init::Uniform, p, rng)?;
        let head1 = Linear::new(store, "head.1", HEAD_HIDDEN, num_tiles, Init::Zeros, p, rng)?;
        Ok(Self {
            num_tiles,
            num_controls,
            embed0,
            embed1,
            gru1,
            gru2,
            head0,
            head1,
        })
    }

    pub fn lookup(store: &ParamStore) -> Result<Self, NumericsError> {
        let embed0 = Linear::lookup(store, "embed.0")?;
        let head1 = Linear::lookup(store, "head.1")?;
        Ok(Self {
            num_tiles: head1.outputs,
            num_controls: embed0.inputs - 2,
            embed0,
            embed1: Linear::lookup(store, "embed.1")?,
            gru1: GruCell::lookup(store, "gru1")?,
            gru2: GruCell::lookup(store, "gru2")?,
            head0: Linear::lookup(store, "head.0")?,
            head1,
        })
    }

    /// Condition embedding of a single request, without recording a tape.
    pub fn embed_conditions(&self, store: &ParamStore, u: &[f64], size: Size) -> Result<Vec<f64>, NumericsError> {
        let x = Tensor::vector(condition_features(u, size));
        let h = ff_forward(&x, store.get(self.embed0.w), store.get(self.embed0.b), Activation::LeakyRelu)?;
        let e = ff_forward(&h, store.get(self.embed1.w), store.get(self.embed1.b), Activation::Identity)?;
        Ok(e.into_data())
    }
}

/// Source-flow estimator of one size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowHead {
    l0: Linear,
    l1: Linear,
}

fn flow_name(size: Size) -> String {
    format!("flow.{size}")
}

/// Lazily created per-size flow heads.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowHeads {
    heads: BTreeMap<Size, FlowHead>,
}

impl FlowHeads {
    pub fn get(&self, size: Size) -> Option<&FlowHead> {
        self.heads.get(&size)
    }

    pub fn sizes(&self) -> impl Iterator<Item = Size> + '_ {
        self.heads.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Finds every flow head stored under `flow.WxH.*`.
    pub fn lookup(store: &ParamStore) -> Result<Self, NumericsError> {
        let mut heads = BTreeMap::new();
        for (_, p) in store.iter() {
            let Some(rest) = p.name.strip_prefix("flow.") else { continue };
            let Some(size) = rest.split('.').next().and_then(|s| s.parse::<Size>().ok()) else {
                return Err(NumericsError::Format(format!("bad flow head name {}", p.name)));
            };
            if heads.contains_key(&size) {
                continue;
            }
            let name = flow_name(size);
            heads.insert(
                size,
                FlowHead {
                    l0: Linear::lookup(store, &format!("{name}.0"))?,
                    l1: Linear::lookup(store, &format!("{name}.1"))?,
                },
            );
        }
        Ok(Self { heads })
    }
}

/// Forward policy and flow heads with their shared parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub store: ParamStore,
    pub policy: PolicyNet,
    pub flows: FlowHeads,
}

/// One generated (or teacher-forced) level.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub size: Size,
    pub conditions: Vec<f64>,
    /// Tiles in scan order.
    pub tiles: Vec<u8>,
    pub step_log_probs: Vec<f64>,
    /// Sum of `step_log_probs`, accumulated in step order.
    pub log_pf: f64,
}

impl Trajectory {
    /// Row-major cells of the generated grid.
    pub fn cells(&self) -> Vec<u8> {
        let mut cells = vec![0; self.size.area()];
        for (&(r, c), &t) in scan_order(self.size.w, self.size.h).iter().zip(&self.tiles) {
            cells[r * self.size.w + c] = t;
        }
        cells
    }
}

/// A batched pass recorded on a tape.
pub struct Pass {
    pub tape: Tape,
    /// `[batch, 1]` total log-probability of each row's trajectory.
    pub log_pf: NodeId,
    pub trajectories: Vec<Trajectory>,
}

/// Draws an index from a categorical given as log-probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if x < acc {
            return i;
        }
    }
    last
}

impl Model {
    pub fn new<R: Rng + ?Sized>(num_tiles: usize, num_controls: usize, rng: &mut R) -> Result<Self, ModelError> {
        let mut store = ParamStore::new();
        let policy = PolicyNet::new(&mut store, num_tiles, num_controls, rng)?;
        Ok(Self {
            store,
            policy,
            flows: FlowHeads::default(),
        })
    }

    /// Rebinds handles to a store loaded from disk.
    pub fn from_store(store: ParamStore) -> Result<Self, ModelError> {
        let policy = PolicyNet::lookup(&store)?;
        let flows = FlowHeads::lookup(&store)?;
        Ok(Self { store, policy, flows })
    }

    pub fn num_tiles(&self) -> usize {
        self.policy.num_tiles
    }

    pub fn num_controls(&self) -> usize {
        self.policy.num_controls
    }

    /// Creates the flow head of `size` if missing. Returns whether it was created.
    pub fn ensure_flow_head<R: Rng + ?Sized>(&mut self, size: Size, rng: &mut R) -> Result<bool, ModelError> {
        if self.flows.heads.contains_key(&size) {
            return Ok(false);
        }
        let name = flow_name(size);
        let f = LrGroup::Flow;
        let n = self.num_controls() + 2;
        let l0 = Linear::new(&mut self.store, &format!("{name}.0"), n, FLOW_HIDDEN, Init::Uniform, f, rng)?;
        let l1 = Linear::new(&mut self.store, &format!("{name}.1"), FLOW_HIDDEN, 1, Init::Zeros, f, rng)?;
        self.flows.heads.insert(size, FlowHead { l0, l1 });
        Ok(true)
    }

    fn condition_input(&self, tape: &mut Tape, size: Size, conds: &[Vec<f64>]) -> Result<NodeId, ModelError> {
        let n = self.num_controls();
        let mut data = Vec::with_capacity(conds.len() * (n + 2));
        for u in conds {
            if u.len() != n {
                return Err(ModelError::Conditions { expected: n, got: u.len() });
            }
            data.extend(condition_features(u, size));
        }
        Ok(tape.input(Tensor::matrix(conds.len(), n + 2, data)?)?)
    }

    /// Records `log z0(u | w, h)` for every row of `conds`, giving `[batch, 1]`.
    pub fn log_z0_node(&self, tape: &mut Tape, size: Size, conds: &[Vec<f64>]) -> Result<NodeId, ModelError> {
        let head = *self.flows.get(size).ok_or(ModelError::MissingFlowHead(size))?;
        let x = self.condition_input(tape, size, conds)?;
        let h = tape.linear(&self.store, x, &head.l0, Activation::LeakyRelu)?;
        Ok(tape.linear(&self.store, h, &head.l1, Activation::Identity)?)
    }

    pub fn log_z0(&self, u: &[f64], size: Size) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let node = self.log_z0_node(&mut tape, size, &[u.to_vec()])?;
        Ok(tape.value(node).data()[0])
    }

    /// Runs the policy over a batch at one size. `choose(row, step, log_probs)`
    /// picks the tile of each row at each step.
    pub fn run<F>(&self, size: Size, conds: &[Vec<f64>], mut choose: F) -> Result<Pass, ModelError>
    where
        F: FnMut(usize, usize, &[f64]) -> Result<u8, ModelError>,
    {
        let batch = conds.len();
        if batch == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let p = &self.policy;
        let a = p.num_tiles;
        let store = &self.store;
        let mut tape = Tape::new();
        let cond = self.condition_input(&mut tape, size, conds)?;
        let e0 = tape.linear(store, cond, &p.embed0, Activation::LeakyRelu)?;
        let emb = tape.linear(store, e0, &p.embed1, Activation::Identity)?;
        let mut h1 = tape.input(Tensor::zeros(&[batch, HIDDEN]))?;
        let mut h2 = tape.input(Tensor::zeros(&[batch, HIDDEN]))?;

        let steps = size.area();
        let mut trajectories: Vec<Trajectory> = conds
            .iter()
            .map(|u| Trajectory {
                size,
                conditions: u.clone(),
                tiles: Vec::with_capacity(steps),
                step_log_probs: Vec::with_capacity(steps),
                log_pf: 0.0,
            })
            .collect();
        let mut chosen = Vec::with_capacity(steps);
        let mut features = vec![0.0; batch * (a + 2)];
        let mut index = vec![0usize; batch];
        for step in 0..steps {
            let changed = row_changed(step, size.w);
            for (row, t) in trajectories.iter().enumerate() {
                let prev = t.tiles.last().copied();
                step_features(a, prev, changed, &mut features[row * (a + 2)..(row + 1) * (a + 2)]);
            }
            let f = tape.input(Tensor::matrix(batch, a + 2, features.clone())?)?;
            let x = tape.concat(&[emb, f])?;
            h1 = tape.gru(store, x, h1, &p.gru1)?;
            let xh1 = tape.concat(&[x, h1])?;
            h2 = tape.gru(store, xh1, h2, &p.gru2)?;
            let all = tape.concat(&[xh1, h2])?;
            let hid = tape.linear(store, all, &p.head0, Activation::LeakyRelu)?;
            let logp = tape.linear(store, hid, &p.head1, Activation::LogSoftmax)?;
            for (row, t) in trajectories.iter_mut().enumerate() {
                let lp = tape.value(logp).row(row);
                let tile = choose(row, step, lp)?;
                if usize::from(tile) >= a {
                    return Err(ModelError::Tile { tile, tiles: a });
                }
                index[row] = usize::from(tile);
                t.tiles.push(tile);
                t.step_log_probs.push(lp[usize::from(tile)]);
                t.log_pf += lp[usize::from(tile)];
            }
            chosen.push(tape.gather(logp, &index)?);
        }
        let log_pf = tape.sum(&chosen)?;
        Ok(Pass {
            tape,
            log_pf,
            trajectories,
        })
    }

    /// Samples one trajectory per row, each row drawing from its own generator.
    pub fn rollout_batch<R: Rng>(&self, size: Size, conds: &[Vec<f64>], rngs: &mut [R]) -> Result<Pass, ModelError> {
        assert_eq!(conds.len(), rngs.len(), "one generator per row");
        self.run(size, conds, |row, _, lp| Ok(sample_categorical(lp, &mut rngs[row]) as u8))
    }

    pub fn rollout<R: Rng>(&self, size: Size, u: &[f64], rng: &mut R) -> Result<Trajectory, ModelError> {
        let mut pass = self.run(size, &[u.to_vec()], |_, _, lp| Ok(sample_categorical(lp, rng) as u8))?;
        Ok(pass.trajectories.pop().expect("one row"))
    }

    /// Scores given levels, all of one size, with their tiles as the actions.
    pub fn teacher_force_batch(&self, levels: &[&Level], conds: &[Vec<f64>]) -> Result<Pass, ModelError> {
        let size = levels.first().ok_or(ModelError::EmptyBatch)?.size();
        if let Some(l) = levels.iter().find(|l| l.size() != size) {
            return Err(ModelError::LevelSize { expected: size, got: l.size() });
        }
        let order = scan_order(size.w, size.h);
        self.run(size, conds, |row, step, _| {
            let (r, c) = order[step];
            Ok(levels[row].get(r, c))
        })
    }

    pub fn teacher_force(&self, level: &Level, u: &[f64]) -> Result<f64, ModelError> {
        let pass = self.teacher_force_batch(&[level], &[u.to_vec()])?;
        Ok(pass.trajectories[0].log_pf)
    }
}
