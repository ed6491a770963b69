mod common;

use common::{brute_force_diversity, uniform_level};
use gfn_levels::condmodel::Gmm;
use gfn_levels::eval::{
    control_eval, control_metrics, generate_with_retries, linear_fit, quality_eval, quality_of,
    retry_success_rate, tile_diversity, EvalError, ExpressiveRange, Generator, QualityReport, RangeAxes,
};
use gfn_levels::games::{Game, Level, Size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sokoban corridor `@$ … . …` whose optimal solution pushes the crate `len` cells.
fn corridor(w: usize, len: usize) -> Level {
    let mut cells = vec![0u8; w];
    cells[0] = 2;
    cells[1] = 3;
    cells[1 + len] = 4;
    Level::new(Game::Sokoban, w, 1, cells).unwrap()
}

fn unplayable(w: usize) -> Level {
    Level::new(Game::Sokoban, w, 1, vec![0; w]).unwrap()
}

/// Returns the same grid for every request.
struct Constant(Level);

impl Generator for Constant {
    fn game(&self) -> Game {
        Game::Sokoban
    }

    fn generate(&self, _: Size, u: &[Vec<f64>], _: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError> {
        Ok(vec![self.0.clone(); u.len()])
    }
}

/// Playable with probability `p`, independently per level.
struct Coin(f64);

impl Generator for Coin {
    fn game(&self) -> Game {
        Game::Sokoban
    }

    fn generate(&self, size: Size, u: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError> {
        Ok(u.iter()
            .map(|_| if rng.random_bool(self.0) { corridor(size.w, 1) } else { unplayable(size.w) })
            .collect())
    }
}

/// Builds exactly the requested solution length.
struct Oracle;

impl Generator for Oracle {
    fn game(&self) -> Game {
        Game::Sokoban
    }

    fn generate(&self, size: Size, u: &[Vec<f64>], _: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError> {
        let spec = &Game::Sokoban.controls()[1];
        Ok(u.iter()
            .map(|u| {
                let len = spec.denormalize(u[1], size).round().clamp(1.0, (size.w - 2) as f64) as usize;
                corridor(size.w, len)
            })
            .collect())
    }
}

/// Returns fewer levels than requested.
struct Short;

impl Generator for Short {
    fn game(&self) -> Game {
        Game::Sokoban
    }

    fn generate(&self, size: Size, u: &[Vec<f64>], _: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError> {
        Ok(vec![unplayable(size.w); u.len().saturating_sub(1)])
    }
}

fn gmm() -> Gmm {
    Gmm {
        labels: vec!["pushed".into(), "length".into()],
        size: None,
        weights: vec![1.0],
        means: vec![vec![0.2, 0.4]],
        covs: vec![vec![0.01, 0.0, 0.0, 0.04]],
    }
}

const ROW: Size = Size::new(10, 1);

#[test]
fn counting_diversity_matches_pairwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for game in Game::ALL {
        let levels: Vec<Level> = (0..50).map(|_| uniform_level(&mut rng, game, 5, 4)).collect();
        let refs: Vec<&Level> = levels.iter().collect();
        let fast = tile_diversity(&refs).unwrap();
        assert!((fast - brute_force_diversity(&levels)).abs() < 1e-12);
    }
}

#[test]
fn constant_generator_quality() {
    let g = Constant(corridor(10, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = quality_eval(&g, &gmm(), ROW, 50, &mut rng, None).unwrap();
    assert_eq!(q.playable, 50);
    assert_eq!(q.playable_frac, 1.0);
    assert_eq!(q.tile_diversity, Some(0.0));
    assert!((q.duplicate_frac - 49.0 / 50.0).abs() < 1e-12);
    assert!((q.unique_signature_frac.unwrap() - 1.0 / 50.0).abs() < 1e-12);
    assert_eq!(q.solution_length, Some((3.0, 0.0)));
    assert_eq!(q.csv_row().split(',').count(), QualityReport::CSV_HEADER.split(',').count());
}

#[test]
fn all_unplayable_quality() {
    let levels = vec![unplayable(10); 5];
    let analyses: Vec<_> = levels.iter().map(|l| Game::Sokoban.analyze(l)).collect();
    let q = quality_of(Game::Sokoban, ROW, &levels, &analyses).unwrap();
    assert_eq!(q.playable, 0);
    assert_eq!(q.tile_diversity, None);
    assert_eq!(q.duplicate_frac, 0.0);
    assert_eq!(q.solution_length, None);
}

#[test]
fn oracle_generator_is_perfectly_controllable() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = control_eval(&Oracle, &gmm(), ROW, 1, &[1, 3, 5, 8], 10, &mut rng, None).unwrap();
    assert_eq!(r.playable_frac, 1.0);
    assert_eq!(r.mae, Some(0.0));
    assert_eq!(r.r2, Some(1.0));
    assert_eq!(r.score, 1.0);
}

#[test]
fn constant_generator_is_not_controllable() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Constant(corridor(10, 3));
    let r = control_eval(&g, &gmm(), ROW, 1, &[1, 3, 5, 8], 10, &mut rng, None).unwrap();
    assert!((r.mae.unwrap() - (2.0 + 0.0 + 2.0 + 5.0) / 4.0).abs() < 1e-12);
    assert!(r.r2.unwrap() <= 0.0);
    // Sokoban solution length tolerance is 10, so every value is within it.
    assert_eq!(r.score, 1.0);
}

#[test]
fn control_metrics_cases() {
    assert_eq!(control_metrics(&[]), (None, None));
    let (mae, r2) = control_metrics(&[(2.0, 2.0), (2.0, 4.0)]);
    assert_eq!(mae, Some(1.0));
    assert_eq!(r2, None);
}

#[test]
fn retry_rate_follows_the_geometric_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = 0.2;
    let one = retry_success_rate(&Coin(p), &gmm(), ROW, 1, 4000, &mut rng).unwrap();
    let ten = retry_success_rate(&Coin(p), &gmm(), ROW, 10, 4000, &mut rng).unwrap();
    assert!((one - p).abs() < 0.03, "{one}");
    assert!((ten - (1.0 - (1.0 - p).powi(10))).abs() < 0.03, "{ten}");
}

#[test]
fn retries_stop_at_first_playable_without_controls() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = generate_with_retries(&Constant(corridor(10, 2)), &gmm(), ROW, &[], 10, &mut rng).unwrap();
    assert_eq!(r.trials, 1);
    let r = generate_with_retries(&Constant(unplayable(10)), &gmm(), ROW, &[], 7, &mut rng).unwrap();
    assert_eq!(r.trials, 7);
    assert!(!r.analysis.playable);
}

#[test]
fn retries_with_controls_keep_the_closest_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = generate_with_retries(&Oracle, &gmm(), ROW, &[(1, 6.0)], 10, &mut rng).unwrap();
    assert_eq!(r.error, Some(0.0));
    assert_eq!(r.trials, 1);
    assert_eq!(r.request.requested[1], 6.0);
    let r = generate_with_retries(&Constant(corridor(10, 3)), &gmm(), ROW, &[(1, 6.0)], 4, &mut rng).unwrap();
    assert_eq!(r.error, Some(3.0));
    assert_eq!(r.trials, 4);
    assert!(matches!(
        generate_with_retries(&Oracle, &gmm(), ROW, &[], 0, &mut rng),
        Err(EvalError::NoTrials)
    ));
}

#[test]
fn short_batches_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    assert!(matches!(
        quality_eval(&Short, &gmm(), ROW, 4, &mut rng, None),
        Err(EvalError::BatchLength { expected: 4, got: 3 })
    ));
}

#[test]
fn expressive_range_counts_playable_levels() {
    let levels: Vec<Level> = (1..=8).map(|k| corridor(10, k)).chain([unplayable(10)]).collect();
    let analyses: Vec<_> = levels.iter().map(|l| Game::Sokoban.analyze(l)).collect();
    let r = ExpressiveRange::build(Game::Sokoban, &analyses, RangeAxes::for_game(Game::Sokoban).with_widths(1.0, 1.0));
    assert_eq!(r.total(), 8);
    assert_eq!(r.coverage(), 8);
    assert!(r.to_svg().starts_with("<svg"));
    assert!(r.to_csv().lines().count() > 1);
}

#[test]
fn linear_fit_of_an_exact_line() {
    let x = [1.0, 2.0, 4.0, 8.0, 16.0];
    let y: Vec<f64> = x.iter().map(|v| 0.81 * v + 0.55).collect();
    let f = linear_fit(&x, &y).unwrap();
    assert!((f.slope - 0.81).abs() < 1e-12);
    assert!((f.intercept - 0.55).abs() < 1e-12);
    assert!((f.r - 1.0).abs() < 1e-12);
    assert!(linear_fit(&[1.0], &[1.0]).is_none());
}
