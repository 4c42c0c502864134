//! Find locations in a headline with the gazetteer and the offline geocoder,
//! then stamp it with no publisher affinity.
//!
//! cargo run --example geoparse_article -- "Crews respond to house fire in Sammamish"

use std::sync::Arc;

use chrono::Utc;
use hyperlocal::app::pipeline::Engine;
use hyperlocal::app::AppConfig;
use hyperlocal::corpus::{build_geocode_query, Article};

fn main() -> hyperlocal::Result<()> {
    let title = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Emerald City council meets with Tacoma leaders over light rail".into());
    let engine = Engine::from_config(&AppConfig::default())?;
    let article = Article {
        id: "demo".into(),
        title,
        snippet: String::new(),
        body: String::new(),
        url: String::new(),
        publisher: "demo-wire".into(),
        published_at: Utc::now(),
    };

    println!("location table matches:");
    for m in engine.gazetteer.lt_matches(&article.text()) {
        println!("  '{}' at {}..{} -> {:?}", m.alias, m.start, m.end, m.loc_ids);
    }

    let query = build_geocode_query(&article);
    println!("geocoder query: {query}");
    for r in Arc::clone(&engine.geocoder).geocode(&query).unwrap_or_default() {
        println!("  {} ({}, {:?})", r.matched_name, r.entity_type, r.confidence);
    }

    let stamp = engine.stamp_article(&article)?;
    println!("rules fired {:?}", stamp.rules_fired);
    for (g, src) in &stamp.provenance {
        println!("  {g} {src:?}");
    }
    Ok(())
}
