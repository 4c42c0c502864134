//! Build a feed index over stamped articles and serve a dense cell and a
//! sparse one that falls back to the nearest popular city.
//!
//! cargo run --example serve_feed

use std::collections::BTreeSet;

use hyperlocal::app::pipeline::Engine;
use hyperlocal::app::synth::{generate, SynthParams};
use hyperlocal::app::AppConfig;
use hyperlocal::gazetteer::read_records;
use hyperlocal::geohash::LatLon;
use hyperlocal::serving::{build_index_at, load_cities, serve};

fn main() -> hyperlocal::Result<()> {
    let config = AppConfig::default();
    let engine = Engine::from_config(&config)?;
    let landmarks = read_records(&config.paths.geocoder_gazetteer[0])?;
    let out = generate(&SynthParams::new(42), &engine.gazetteer, &landmarks)?;
    let locals: BTreeSet<String> = out.publishers.iter().filter(|p| p.strongly_local).map(|p| p.id.clone()).collect();
    let engine = engine.clone().with_affinity(engine.build_affinity_map(&out.articles, &locals)?);
    let stamps = engine.stamp_corpus(&out.articles)?.stamps;

    let newest = out.articles.iter().map(|a| a.published_at).max().unwrap_or_default();
    let index = build_index_at(&stamps, &out.articles, newest)?;
    let cities = load_cities(&config.paths.cities)?;
    println!("index: {} cells, {} articles", index.cell_count(), index.article_count());

    let titles = |ids: &[String]| -> Vec<String> {
        ids.iter()
            .filter_map(|id| out.articles.iter().find(|a| &a.id == id))
            .map(|a| format!("{} [{}]", a.title, a.publisher))
            .collect()
    };
    for (label, lat, lon) in [("downtown Seattle", 47.6062, -122.3321), ("rural Nevada", 39.5, -117.0)] {
        let resp = serve(LatLon::new(lat, lon)?, 5, &index, &cities, config.min_k)?;
        println!(
            "\n{label} ({}): {} via {}",
            resp.user_geohash,
            resp.source,
            resp.backfill_city.as_deref().unwrap_or("own cell")
        );
        for t in titles(&resp.articles) {
            println!("  {t}");
        }
    }
    Ok(())
}
