//! Wiring of the library pieces into the stamping and affinity pipelines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::affinity::{self, AffinityBuilder, AffinityMap};
use crate::app::config::AppConfig;
use crate::corpus::{build_geocode_query_with, Article};
use crate::error::{Error, Result};
use crate::gazetteer::{self, Gazetteer, LocationRecord};
use crate::geocoder::{bma_geohashes, Confidence, Geocoder, HttpUpstream, OfflineGeocoder, RemoteGeocoder};
use crate::stamper::{self, CandidateSets, RuleHistogram, StampResult};

/// A publisher as listed in the publishers file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublisherInfo {
    pub id: String,
    pub strongly_local: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_county: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dma: Option<String>,
}

pub fn load_publishers(path: &Path) -> Result<Vec<PublisherInfo>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::FileFormat {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn save_publishers(path: &Path, publishers: &[PublisherInfo]) -> Result<()> {
    let text = serde_json::to_string_pretty(publishers).expect("publishers serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_gazetteer(config: &AppConfig) -> Result<Gazetteer> {
    let paths: Vec<&Path> = config.paths.gazetteer.iter().map(|p| p.as_path()).collect();
    Gazetteer::load_many(&paths, &config.gazetteer_options())
}

/// Offline geocoder over the location table plus the extra geocoder-only
/// records, or the remote client when an endpoint is configured.
pub fn make_geocoder(config: &AppConfig, table: &Gazetteer) -> Result<Arc<dyn Geocoder>> {
    if !config.geocoder_endpoint.is_empty() {
        let gc = config.geocoder_config();
        let upstream = HttpUpstream::new(&gc.endpoint, gc.api_key.clone())?;
        return Ok(Arc::new(RemoteGeocoder::new(upstream, gc)?));
    }
    let mut records: Vec<LocationRecord> = table.records().to_vec();
    for path in &config.paths.geocoder_gazetteer {
        records.extend(gazetteer::read_records(path)?);
    }
    let gaz = Gazetteer::with_options(records, &config.gazetteer_options())?;
    Ok(Arc::new(OfflineGeocoder::new(Arc::new(gaz))))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StampRun {
    pub stamps: Vec<StampResult>,
    pub histogram: RuleHistogram,
    pub geocoder_failures: usize,
    /// Detected locations too large to cover at stamp length.
    pub oversized_locations: usize,
}

#[derive(Clone)]
pub struct Engine {
    pub config: AppConfig,
    pub gazetteer: Arc<Gazetteer>,
    pub geocoder: Arc<dyn Geocoder>,
    pub affinity: Arc<AffinityMap>,
}

impl Engine {
    pub fn new(config: AppConfig, gazetteer: Arc<Gazetteer>, geocoder: Arc<dyn Geocoder>, affinity: AffinityMap) -> Self {
        Engine {
            config,
            gazetteer,
            geocoder,
            affinity: Arc::new(affinity),
        }
    }

    /// Loads the gazetteer and geocoder from the configured paths, with an
    /// empty affinity map.
    pub fn from_config(config: &AppConfig) -> Result<Self> {
        let gaz = load_gazetteer(config)?;
        let geocoder = make_geocoder(config, &gaz)?;
        Ok(Engine::new(config.clone(), Arc::new(gaz), geocoder, AffinityMap::new()))
    }

    pub fn with_affinity(mut self, affinity: AffinityMap) -> Self {
        self.affinity = Arc::new(affinity);
        self
    }

    /// Candidate cells for one article. A geocoder failure leaves the
    /// geocoder set empty and is reported through the flag.
    pub fn candidates(&self, article: &Article) -> (CandidateSets, bool, usize) {
        let len = self.config.geohash_len;
        let cap = self.config.max_cover_cells;
        let mut oversized = 0;
        let mut cands = CandidateSets::default();

        for rec in self.gazetteer.lt_lookup(&article.text()) {
            match rec.geohashes_capped(len, cap) {
                Ok(cells) => cands.lt.extend(cells.into_iter().map(|g| (g, rec.loc_id.clone()))),
                Err(_) => oversized += 1,
            }
        }

        let mut failed = false;
        let query = build_geocode_query_with(article, self.config.trim_words);
        match self.geocoder.geocode(&query) {
            Ok(results) => {
                for r in results {
                    match bma_geohashes(std::slice::from_ref(&r), len, Confidence::Low, cap) {
                        Ok(cells) => cands.bma.extend(cells),
                        Err(_) => oversized += 1,
                    }
                }
            }
            Err(e) => {
                log::warn!("article {}: geocoder failed: {e}", article.id);
                failed = true;
            }
        }

        if let Some(entry) = self.affinity.get(&article.publisher) {
            cands.publisher = Some(entry.geohashes.clone());
            cands.publisher_locations = entry.locations.clone();
        }
        (cands, failed, oversized)
    }

    pub fn stamp_article(&self, article: &Article) -> Result<StampResult> {
        let (cands, _, _) = self.candidates(article);
        stamper::stamp(&article.id, &cands, self.config.prefix_len)
    }

    pub fn stamp_corpus(&self, articles: &[Article]) -> Result<StampRun> {
        let mut run = StampRun::default();
        for a in articles {
            let (cands, failed, oversized) = self.candidates(a);
            run.geocoder_failures += usize::from(failed);
            run.oversized_locations += oversized;
            let result = stamper::stamp(&a.id, &cands, self.config.prefix_len)?;
            run.histogram.add(&result);
            run.stamps.push(result);
        }
        Ok(run)
    }

    /// Affinity entries for the given publishers, each built from its
    /// articles within the time window ending at its newest article.
    pub fn build_affinity_map(&self, articles: &[Article], publishers: &BTreeSet<String>) -> Result<AffinityMap> {
        let mut builder = AffinityBuilder::new(&self.gazetteer, self.geocoder.as_ref(), self.config.affinity_params());
        builder.trim_words = self.config.trim_words;
        builder.max_cover_cells = self.config.max_cover_cells;
        let window = self.config.affinity_params().time_window();
        let mut map = BTreeMap::new();
        for publisher in publishers {
            let mine = affinity::windowed(articles, publisher, window);
            match builder.build(publisher, &mine)? {
                Some(entry) => {
                    map.insert(publisher.clone(), entry);
                }
                None => log::info!("{publisher}: no affinity entry ({} articles in window)", mine.len()),
            }
        }
        Ok(map)
    }
}
