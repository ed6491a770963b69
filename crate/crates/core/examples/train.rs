//! Short Sokoban training run printing per-size statistics.
//!
//! `cargo run --release --example train -- [iterations] [out-dir]`
use std::path::PathBuf;

use anyhow::Result;
use gfn_levels::cli::train;
use gfn_levels::games::{Game, Size};
use gfn_levels::training::{SizeSets, TrainConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("gfn-train-example"), PathBuf::from);

    let mut config = TrainConfig::defaults(Game::Sokoban);
    config.iterations = iterations;
    config.checkpoint_every = 100;
    config.sizes = SizeSets {
        seed: vec![Size::new(3, 3)],
        intermediate: vec![],
        desired: vec![Size::new(4, 4)],
    };
    let ck = train(config, &out, None, |s| {
        if s.iteration % 20 == 0 {
            let sizes: Vec<String> = s
                .sizes
                .iter()
                .map(|z| format!("{} {}/{}{}", z.size, z.playable, z.rollouts, if z.trained { "" } else { " (inactive)" }))
                .collect();
            println!("{:>5}  loss {:>9.3}  {}", s.iteration, s.loss, sizes.join("  "));
        }
    })?;
    println!("{} buffered levels, checkpoint in {}", ck.buffer.total_len(), out.display());
    Ok(())
}
