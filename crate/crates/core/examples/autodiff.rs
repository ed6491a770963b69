//! Fits a two-layer network to a toy target with the tape and RMSProp.
use anyhow::Result;
use gfn_levels::numerics::{Activation, Init, Linear, LrGroup, ParamStore, RmsProp, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let l1 = Linear::new(&mut store, "l1", 1, 16, Init::Uniform, LrGroup::Policy, &mut rng)?;
    let l2 = Linear::new(&mut store, "l2", 16, 1, Init::Uniform, LrGroup::Policy, &mut rng)?;
    let opt = RmsProp {
        lr_policy: 3e-3,
        ..RmsProp::default()
    };

    for step in 0..=2000 {
        let xs: Vec<f64> = (0..32).map(|_| rng.random_range(-2.0..2.0)).collect();
        let target: Vec<f64> = xs.iter().map(|x| -(x * x)).collect();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(32, 1, xs)?)?;
        let h = tape.linear(&store, x, &l1, Activation::LeakyRelu)?;
        let y = tape.linear(&store, h, &l2, Activation::Identity)?;
        let d = tape.offset(y, &target)?;
        let sq = tape.square(d)?;
        let sum = tape.sum_all(sq)?;
        let loss = tape.scale(sum, 1.0 / 32.0)?;
        let back = tape.backward(loss, &store)?;
        opt.step(&mut store, &back.params)?;
        if step % 400 == 0 {
            println!("step {step:>4}  mse {:.5}", tape.value(loss).data()[0]);
        }
    }
    Ok(())
}
