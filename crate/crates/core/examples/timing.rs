//! Times single-level model calls across sizes and fits a line in the cell count.
use anyhow::Result;
use gfn_levels::eval::{linear_fit, model_call_times};
use gfn_levels::games::{Game, Size};
use gfn_levels::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let game = Game::Sokoban;
    let model = Model::new(game.num_tiles(), game.controls().len(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let sizes: Vec<Size> = (3..=10).map(|s| Size::new(s, s)).collect();
    let times = model_call_times(&model, &sizes, 30, 1)?;
    for t in &times {
        println!("{:>6}  {:>8.3} ms", t.size.to_string(), t.median * 1e3);
    }
    let x: Vec<f64> = times.iter().map(|t| t.size.area() as f64).collect();
    let y: Vec<f64> = times.iter().map(|t| t.median * 1e3).collect();
    if let Some(f) = linear_fit(&x, &y) {
        println!("{:.4} wh + {:.3} ms, r = {:.4}", f.slope, f.intercept, f.r);
    }
    Ok(())
}
