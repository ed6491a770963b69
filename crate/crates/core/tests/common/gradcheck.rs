use gfn_levels::games::{Game, Level, Size};
use gfn_levels::model::Model;
use gfn_levels::numerics::{Activation, GruCell, Init, Linear, LrGroup, NodeId, ParamStore, Tape, Tensor};
use gfn_levels::training::pass_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numeric_param_grads, random_vec, rel_err};

pub const INSTANCES: usize = 100;
pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

type Build = dyn Fn(&ParamStore, &mut Tape, &[NodeId]) -> NodeId;

/// Largest relative error between analytic and central-difference gradients,
/// over every parameter coordinate and every input coordinate.
fn max_error(store: &ParamStore, inputs: &[Tensor], build: &Build) -> f64 {
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input(t.clone()).unwrap()).collect();
        let loss = build(store, &mut tape, &ids);
        tape.value(loss).data()[0]
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input(t.clone()).unwrap()).collect();
    let loss = build(store, &mut tape, &ids);
    let back = tape.backward(loss, store).unwrap();

    let mut worst = 0.0f64;
    let numeric = numeric_param_grads(store, H, |s| eval(s, inputs));
    for ((_, analytic), num) in back.params.iter().zip(&numeric) {
        for (a, n) in analytic.data().iter().zip(num.data()) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    for (k, id) in ids.iter().enumerate() {
        let analytic = back.node_grad(&tape, *id);
        for i in 0..inputs[k].len() {
            let mut work = inputs.to_vec();
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + H;
            let up = eval(store, &work);
            work[k].data_mut()[i] = orig - H;
            let down = eval(store, &work);
            worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * H)));
        }
    }
    worst
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, random_vec(rng, rows * cols, 1.5)).unwrap()
}

/// Squared distance to a random target, summed.
fn squared_error(tape: &mut Tape, y: NodeId, target: &[f64]) -> NodeId {
    let d = tape.offset(y, target).unwrap();
    let s = tape.square(d).unwrap();
    tape.sum_all(s).unwrap()
}

/// Worst relative error of a linear layer over random shapes.
pub fn linear(act: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let (inputs, outputs, batch) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let layer = Linear::new(&mut store, "l", inputs, outputs, Init::Uniform, LrGroup::Policy, &mut rng).unwrap();
        let x = matrix(&mut rng, batch, inputs);
        let target = random_vec(&mut rng, batch * outputs, 1.0);
        let build = move |s: &ParamStore, tape: &mut Tape, ids: &[NodeId]| {
            let y = tape.linear(s, ids[0], &layer, act).unwrap();
            squared_error(tape, y, &target)
        };
        worst = worst.max(max_error(&store, &[x], &build));
    }
    worst
}

/// Two chained GRU steps.
pub fn gru(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let (inputs, hidden, batch) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", inputs, hidden, LrGroup::Policy, &mut rng).unwrap();
        let x = matrix(&mut rng, batch, inputs);
        let h = matrix(&mut rng, batch, hidden);
        let target = random_vec(&mut rng, batch * hidden, 1.0);
        let build = move |s: &ParamStore, tape: &mut Tape, ids: &[NodeId]| {
            // Two chained steps so the recurrent path is exercised.
            let h1 = tape.gru(s, ids[0], ids[1], &cell).unwrap();
            let h2 = tape.gru(s, ids[0], h1, &cell).unwrap();
            squared_error(tape, h2, &target)
        };
        worst = worst.max(max_error(&store, &[x, h], &build));
    }
    worst
}

/// Concatenation, gather, sum, scale and square after a log-softmax layer.
pub fn concat_gather(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let batch = rng.random_range(1..4);
        let (da, db) = (rng.random_range(1..4), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let layer = Linear::new(&mut store, "l", da + db, 4, Init::Uniform, LrGroup::Policy, &mut rng).unwrap();
        let a = matrix(&mut rng, batch, da);
        let b = matrix(&mut rng, batch, db);
        let index: Vec<usize> = (0..batch).map(|_| rng.random_range(0..4)).collect();
        let c = rng.random_range(-2.0..2.0);
        let build = move |s: &ParamStore, tape: &mut Tape, ids: &[NodeId]| {
            let x = tape.concat(&[ids[0], ids[1]]).unwrap();
            let y = tape.linear(s, x, &layer, Activation::LogSoftmax).unwrap();
            let g = tape.gather(y, &index).unwrap();
            let g2 = tape.gather(y, &vec![0; index.len()]).unwrap();
            let t = tape.sum(&[g, g2]).unwrap();
            let t = tape.scale(t, c).unwrap();
            let sq = tape.square(t).unwrap();
            tape.sum_all(sq).unwrap()
        };
        worst = worst.max(max_error(&store, &[a, b], &build));
    }
    worst
}

/// Randomizes every parameter so that zero-initialized layers do not hide
/// gradient paths.
fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
}

/// End-to-end trajectory-balance loss of a small model, on random coordinates.
pub fn trajectory_balance(seed: u64) -> f64 {
    const COORDS: usize = 20;
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = Size::new(2, 2);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let mut model = Model::new(3, 2, &mut rng).unwrap();
        model.ensure_flow_head(size, &mut rng).unwrap();
        jitter(&mut model.store, &mut rng);
        let levels: Vec<Level> = (0..2)
            .map(|_| Level::new(Game::Sokoban, 2, 2, (0..4).map(|_| rng.random_range(0..3)).collect()).unwrap())
            .collect();
        let refs: Vec<&Level> = levels.iter().collect();
        let conds: Vec<Vec<f64>> = (0..2).map(|_| random_vec(&mut rng, 2, 1.0)).collect();
        let log_r: Vec<f64> = random_vec(&mut rng, 2, 3.0);
        let scale = 0.5;
        let loss = |m: &Model| -> f64 {
            let mut pass = m.teacher_force_batch(&refs, &conds).unwrap();
            let (losses, _, _) = pass_loss(m, &mut pass, &log_r, scale).unwrap();
            scale * losses.iter().sum::<f64>()
        };
        let mut pass = model.teacher_force_batch(&refs, &conds).unwrap();
        let (_, _, grads) = pass_loss(&model, &mut pass, &log_r, scale).unwrap();

        let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
        let mut work = model.clone();
        for _ in 0..COORDS {
            let id = ids[rng.random_range(0..ids.len())];
            let i = rng.random_range(0..work.store.get(id).len());
            let orig = work.store.get(id).data()[i];
            work.store.get_mut(id).data_mut()[i] = orig + STEP;
            let up = loss(&work);
            work.store.get_mut(id).data_mut()[i] = orig - STEP;
            let down = loss(&work);
            work.store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(grads.get(id).data()[i], numeric));
        }
    }
    worst
}
