//! Clusters playable Sokoban levels by property and compares replay sampling modes.
use std::collections::BTreeMap;

use anyhow::Result;
use gfn_levels::games::{Game, Level};
use gfn_levels::training::{diversity_log_reward, make_entry, SizeBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut buf = SizeBuffer::default();
    while buf.len() < 300 {
        let cells = (0..16).map(|_| rng.random_range(0..7)).collect();
        let level = Level::new(Game::Sokoban, 4, 4, cells)?;
        let a = Game::Sokoban.analyze(&level);
        if a.playable {
            buf.insert(make_entry(&level, &a, false)?);
        }
    }
    println!("{} levels in {} clusters", buf.len(), buf.num_clusters());
    for (key, entries) in buf.clusters() {
        let r = diversity_log_reward(&entries[0].level, Some(key), Some(&buf));
        println!("  cluster {key:<8} size {:>3}  diversity reward x{:.2}", entries.len(), r.exp());
    }

    for diversity in [false, true] {
        let mut hits: BTreeMap<String, usize> = BTreeMap::new();
        for _ in 0..10_000 {
            let e = buf.sample(diversity, &mut rng).unwrap();
            *hits.entry(e.key.to_string()).or_default() += 1;
        }
        println!("diversity sampling {diversity}: {hits:?}");
    }
    Ok(())
}
