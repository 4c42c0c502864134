//! Mine publisher-to-location affinity from a generated corpus and show the
//! home county each local publisher resolves to.
//!
//! cargo run --example publisher_affinity -- 7

use std::collections::BTreeSet;

use hyperlocal::app::pipeline::Engine;
use hyperlocal::app::synth::{generate, SynthParams, LOCAL_PUBLISHERS};
use hyperlocal::app::AppConfig;
use hyperlocal::gazetteer::read_records;

fn main() -> hyperlocal::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let config = AppConfig::default();
    let engine = Engine::from_config(&config)?;
    let landmarks = read_records(&config.paths.geocoder_gazetteer[0])?;
    let out = generate(&SynthParams::new(seed), &engine.gazetteer, &landmarks)?;
    let remote = out.remote_singletons();

    let locals: BTreeSet<String> = LOCAL_PUBLISHERS.iter().map(|p| p.0.to_string()).collect();
    let map = engine.build_affinity_map(&out.articles, &locals)?;
    for (publisher, home, _) in LOCAL_PUBLISHERS {
        let Some(entry) = map.get(*publisher) else {
            println!("{publisher:<24} no entry");
            continue;
        };
        let planted = &remote[*publisher];
        println!(
            "{publisher:<24} {:?} support {:?} cells {} home {} remote dropped {}",
            entry.locations,
            entry.support.values().collect::<Vec<_>>(),
            entry.geohashes.len(),
            if entry.locations.contains(*home) { "found" } else { "MISSED" },
            planted.iter().all(|l| !entry.locations.contains(l)),
        );
    }
    Ok(())
}
