//! Samples levels from an untrained policy and scores them by teacher forcing.
use anyhow::Result;
use gfn_levels::games::{Game, Level, Size};
use gfn_levels::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let game = Game::Zelda;
    let size = Size::new(5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Model::new(game.num_tiles(), game.controls().len(), &mut rng)?;
    println!("{} parameters", model.store.numel());

    let u = vec![0.5; game.controls().len()];
    for _ in 0..3 {
        let t = model.rollout(size, &u, &mut rng)?;
        let level = Level::new(game, size.w, size.h, t.cells())?;
        let forced = model.teacher_force(&level, &u)?;
        let a = game.analyze(&level);
        println!("{}\nlog P_F {:.4} (forced {forced:.4}), playable {}\n", level.render(), t.log_pf, a.playable);
    }
    Ok(())
}
