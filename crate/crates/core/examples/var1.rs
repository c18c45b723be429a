//! Runs the six-variant VAR(1) comparison and prints the report.
//!
//! `cargo run --release -p tck-core --example var1 -- [seed] [--no-center]`

use std::time::Instant;

use tck_core::experiment::{reproduce_var1, PipelineConfig};

fn main() -> tck_core::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = PipelineConfig {
        center: !std::env::args().any(|a| a == "--no-center"),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let (report, _) = reproduce_var1(seed, &cfg)?;
    print!("{}", report.to_table());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
