//! Stamp a generated corpus and print the rule histogram with a few
//! stamped articles.
//!
//! cargo run --example stamp_corpus

use std::collections::BTreeSet;

use hyperlocal::app::pipeline::Engine;
use hyperlocal::app::synth::{generate, SynthParams};
use hyperlocal::app::AppConfig;
use hyperlocal::gazetteer::read_records;

fn main() -> hyperlocal::Result<()> {
    let config = AppConfig::default();
    let engine = Engine::from_config(&config)?;
    let landmarks = read_records(&config.paths.geocoder_gazetteer[0])?;
    let out = generate(&SynthParams::new(42), &engine.gazetteer, &landmarks)?;
    let locals: BTreeSet<String> = out.publishers.iter().filter(|p| p.strongly_local).map(|p| p.id.clone()).collect();
    let affinity = engine.build_affinity_map(&out.articles, &locals)?;
    let engine = engine.with_affinity(affinity);

    let run = engine.stamp_corpus(&out.articles)?;
    println!("{} articles: {}", run.stamps.len(), run.histogram);
    println!("geocoder failures {}, oversized locations {}", run.geocoder_failures, run.oversized_locations);

    let truth = out.truth_map();
    for kind in ["home_city", "implicit", "remote", "mid_body", "placeless"] {
        let Some(s) = run.stamps.iter().find(|s| truth[&s.article_id].kind == kind) else {
            continue;
        };
        let article = out.articles.iter().find(|a| a.id == s.article_id).expect("stamped article exists");
        println!(
            "[{kind}] {} ({}): rules {:?}, {} cells, locations {:?}",
            article.title,
            article.publisher,
            s.rules_fired,
            s.geohashes.len(),
            s.locations
        );
    }
    Ok(())
}
