//! Generate the benchmark, stamp it, and compare served-article distances
//! for ensemble stamps against the publisher-to-DMA baseline.
//!
//! cargo run --release --example replay_eval -- 42

use hyperlocal::app::commands::{cmd_eval, cmd_replay, cmd_synth, ReplayInputs};
use hyperlocal::app::AppConfig;

fn main() -> hyperlocal::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let defaults = AppConfig::default();
    let dir = std::env::temp_dir().join(format!("hyperlocal-replay-{seed}"));
    let (_, summary) = cmd_synth(&defaults, seed, &dir, true)?;
    println!(
        "seed {seed}: {} articles, {} requests, {} affinity entries, {}",
        summary.articles,
        summary.requests,
        summary.affinity_entries,
        summary.histogram.map(|h| h.to_string()).unwrap_or_default()
    );

    let mut config = AppConfig::load(Some(&dir.join("hyperlocal.toml")))?;
    config.paths.gazetteer = defaults.paths.gazetteer.clone();
    config.paths.geocoder_gazetteer = defaults.paths.geocoder_gazetteer.clone();
    config.paths.cities = defaults.paths.cities.clone();

    println!("\nserving replay, scored against ground truth:");
    println!("{}", cmd_replay(&config, &ReplayInputs::from_config(&config))?.table());

    let p = &config.paths;
    println!("\npaired impressions, each arm scored against its own stamps:");
    println!("{}", cmd_eval(&config, &p.stamps, &p.impressions, &p.dma, &p.corpus)?.table());
    println!("\nfiles in {}", dir.display());
    Ok(())
}
