//! Declarative experiment runner: resolve a config, execute, persist CSVs
//! plus a manifest keyed by the config hash, then hit the cache on re-run.

use dicke_memory::harness::{run_experiment, RunOptions};

fn main() -> dicke_memory::Result<()> {
    let opts = RunOptions {
        out_override: Some(std::env::temp_dir().join("dicke-memory-example")),
        ..Default::default()
    };

    let summary = run_experiment("custom", &opts)?;
    println!(
        "{} -> {} ({}, {:.1}s)",
        summary.experiment,
        summary.dir.display(),
        if summary.cached { "cached" } else { "computed" },
        summary.wall_seconds,
    );
    for f in &summary.files {
        println!("  wrote {f}");
    }
    for (k, v) in &summary.headline {
        println!("  {k} = {v:.6e}");
    }

    // unchanged config, same hash: the second run is a no-op
    let again = run_experiment("custom", &opts)?;
    println!("re-run cached: {}", again.cached);
    Ok(())
}
