//! Tile diversity, duplicate rate and expressive range of random playable Zelda levels.
use anyhow::Result;
use gfn_levels::eval::{quality_of, ExpressiveRange, RangeAxes};
use gfn_levels::games::{Game, Level, Size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let game = Game::Zelda;
    let size = Size::new(6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut levels = Vec::new();
    let mut analyses = Vec::new();
    for _ in 0..20_000 {
        // mostly floor, so that random grids are sometimes playable
        let cells = (0..size.area())
            .map(|_| if rng.random_bool(0.7) { 0 } else { rng.random_range(0..game.num_tiles() as u8) })
            .collect();
        let level = Level::new(game, size.w, size.h, cells)?;
        analyses.push(game.analyze(&level));
        levels.push(level);
    }
    let q = quality_of(game, size, &levels, &analyses)?;
    println!("playable {} of {}", q.playable, q.generated);
    println!("tile diversity {:.4}", q.tile_diversity.unwrap_or(0.0));
    println!("duplicates {:.4}", q.duplicate_frac);

    let range = ExpressiveRange::build(game, &analyses, RangeAxes::for_game(game));
    println!("expressive range covers {} bins", range.coverage());
    let svg = std::env::temp_dir().join("zelda-range.svg");
    std::fs::write(&svg, range.to_svg())?;
    println!("wrote {}", svg.display());
    Ok(())
}
