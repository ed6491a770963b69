//! Runs the smoke evaluation protocol on a checkpoint and prints the tables.
//!
//! `cargo run --release --example evaluate -- <checkpoint> [out-dir]`
use std::path::PathBuf;

use anyhow::{Context, Result};
use gfn_levels::cli::{evaluate, Checkpoint, Protocol};
use gfn_levels::eval::{ControlReport, QualityReport};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().context("usage: evaluate <checkpoint> [out-dir]")?;
    let out = args.next().map(PathBuf::from);
    let ck = Checkpoint::load(path.as_ref())?;
    let sizes: Vec<_> = ck.gmms.keys().copied().collect();
    let ev = evaluate(&ck, &sizes, Protocol::SMOKE, 0, 1, out.as_deref())?;

    println!("{}", QualityReport::CSV_HEADER);
    for q in &ev.quality {
        println!("{}", q.csv_row());
    }
    println!("\n{}", ControlReport::CSV_HEADER);
    for c in &ev.controls {
        println!("{}", c.csv_row());
    }
    if let Some(f) = ev.model_call_fit {
        println!("\nmodel call: {:.4} ms per cell + {:.3} ms (r = {:.4})", f.slope * 1e3, f.intercept * 1e3, f.r);
    }
    Ok(())
}
