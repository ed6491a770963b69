//! Fits a mixture to synthetic control values and samples with one control fixed.
use anyhow::Result;
use gfn_levels::condmodel::fit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = Normal::new(0.3, 0.05)?;
    let b = Normal::new(0.7, 0.1)?;
    let points: Vec<Vec<f64>> = (0..600)
        .map(|i| {
            let x = if i % 3 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) };
            vec![x, 2.0 * x + 0.05 * a.sample(&mut rng)]
        })
        .collect();

    let f = fit(&points, 4, 200, &mut rng)?;
    println!(
        "{} components, log-likelihood {:.2} after {} iterations",
        f.model.components(),
        f.log_likelihood.last().unwrap(),
        f.log_likelihood.len()
    );
    for w in f.model.weights.iter().zip(&f.model.means) {
        println!("  weight {:.3}  mean {:.3?}", w.0, w.1);
    }
    for x in [0.3, 0.7] {
        let s = f.model.conditional_sample(&[(0, x)], &mut rng)?;
        println!("given x = {x}: y = {:.3}", s.u[1]);
    }
    Ok(())
}
