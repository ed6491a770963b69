//! Solves one level of each game and prints the analysis.
use anyhow::Result;
use gfn_levels::cli::solve;
use gfn_levels::games::Game;

const LEVELS: [(Game, &str); 3] = [
    (Game::Sokoban, "#####\n#@$.#\n# $.#\n#####"),
    (Game::Zelda, "A.+.1\n.....\n..g.."),
    (Game::DangerDave, ".....\n.....\nA^+$g"),
];

fn main() -> Result<()> {
    for (game, text) in LEVELS {
        println!("== {game}\n{text}\n{}", solve(text, game)?);
    }
    Ok(())
}
