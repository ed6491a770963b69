//! Generates levels from a checkpoint, with and without a fixed control.
//!
//! `cargo run --release --example generate -- [checkpoint] [size]`
//! Without a checkpoint a short 3x3 Sokoban run is trained first.
use anyhow::Result;
use gfn_levels::cli::{generate, parse_controls, train, Checkpoint, GenerateRequest};
use gfn_levels::games::{Game, Size};
use gfn_levels::training::{SizeSets, TrainConfig};

fn quick_checkpoint() -> Result<Checkpoint> {
    let mut config = TrainConfig::defaults(Game::Sokoban);
    config.iterations = 60;
    config.sizes = SizeSets {
        seed: vec![Size::new(3, 3)],
        intermediate: vec![],
        desired: vec![],
    };
    train(config, &std::env::temp_dir().join("gfn-generate-example"), None, |_| {})
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let ck = match args.next() {
        Some(path) => Checkpoint::load(path.as_ref())?,
        None => quick_checkpoint()?,
    };
    let size: Size = args.next().map_or(Ok(Size::new(3, 3)), |s| s.parse())?;

    let fixed = parse_controls(ck.game(), &format!("{}=2", ck.game().controls()[0].name))?;
    for fixed in [&[][..], &fixed[..]] {
        let req = GenerateRequest {
            size,
            count: 4,
            fixed,
            trials: 10,
            seed: 5,
        };
        let m = generate(&ck, &req, None)?;
        println!("conditions: {}", m.condition_source);
        for g in &m.levels {
            println!("{}\nplayable {} after {} trials, requested {:?}\n", g.level, g.playable, g.trials, g.requested);
        }
    }
    Ok(())
}
