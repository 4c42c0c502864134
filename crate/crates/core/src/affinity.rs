//! Publisher-to-location affinity.
//!
//! For a strongly local publisher, every location detected in its recent
//! articles is turned into length-4 cells. Article counts per length-3
//! prefix go through a gap-ratio cut, surviving locations are rolled up to
//! county and state and cut again, and what remains is the set of places the
//! publisher habitually covers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, build_geocode_query_with, Article, DEFAULT_TRIM_WORDS};
use crate::error::{Error, Result};
use crate::gazetteer::{Gazetteer, Level, LocationRecord};
use crate::geocoder::{Confidence, GeocodeError, Geocoder};
use crate::geohash::{Geohash, DEFAULT_MAX_COVER_CELLS};

pub const GEOHASH_LEN: usize = 4;
const PREFIX_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams {
    pub tau_geohash3: f64,
    pub tau_admin: f64,
    pub min_articles: usize,
    pub time_window_days: i64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            tau_geohash3: 0.2,
            tau_admin: 0.2,
            min_articles: 20,
            time_window_days: 30,
        }
    }
}

impl AffinityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_geohash3", self.tau_geohash3), ("tau_admin", self.tau_admin)] {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::validation(format!("{name} must lie in (0, 1), got {tau}")));
            }
        }
        if self.min_articles == 0 {
            return Err(Error::validation("min_articles must be at least 1"));
        }
        if self.time_window_days <= 0 {
            return Err(Error::validation("time window must be positive"));
        }
        Ok(())
    }

    pub fn time_window(&self) -> Duration {
        Duration::days(self.time_window_days)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffinityEntry {
    pub publisher: String,
    pub locations: BTreeSet<String>,
    pub geohashes: BTreeSet<Geohash>,
    pub support: BTreeMap<String, usize>,
}

/// Keeps the head of the count list up to the first relative drop below
/// `tau`.
///
/// Counts are ordered descending (ties by key ascending); with `c1 >= c2 >=
/// ...`, the first `i` such that `c(i+1) / c(i) < tau` ends the kept prefix.
/// Without such a drop every key is kept.
pub fn gap_ratio_filter<K: Ord + Clone>(counts: &BTreeMap<K, usize>, tau: f64) -> Result<BTreeSet<K>> {
    if counts.is_empty() {
        return Err(Error::validation("gap ratio filter needs at least one count"));
    }
    if counts.values().any(|&c| c == 0) {
        return Err(Error::validation("gap ratio filter counts must be positive"));
    }
    let mut ranked: Vec<(&K, usize)> = counts.iter().map(|(k, &c)| (k, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let cut = ranked
        .windows(2)
        .position(|w| (w[1].1 as f64) / (w[0].1 as f64) < tau)
        .map_or(ranked.len(), |i| i + 1);
    Ok(ranked[..cut].iter().map(|(k, _)| (*k).clone()).collect())
}

/// Locations detected in one article: gazetteer aliases in the full text plus
/// geocoder hits (High and Medium) on the trimmed query, mapped back onto
/// gazetteer records.
pub fn article_locations(
    article: &Article,
    gaz: &Gazetteer,
    geocoder: &dyn Geocoder,
    trim_words: usize,
) -> Result<BTreeSet<String>, GeocodeError> {
    let mut ids: BTreeSet<String> = gaz
        .lt_lookup(&article.text())
        .into_iter()
        .map(|r| r.loc_id.clone())
        .collect();
    let query = build_geocode_query_with(article, trim_words);
    if !query.is_empty() {
        for hit in geocoder.geocode(&query)? {
            if hit.confidence < Confidence::Medium {
                continue;
            }
            ids.extend(gaz.resolve(&hit.matched_name, hit.point).into_iter().map(|r| r.loc_id.clone()));
        }
    }
    Ok(ids)
}

struct CellCache<'a> {
    gaz: &'a Gazetteer,
    max_cells: usize,
    cells: BTreeMap<String, Option<BTreeSet<Geohash>>>,
}

impl<'a> CellCache<'a> {
    fn get(&mut self, loc_id: &str) -> Option<&BTreeSet<Geohash>> {
        let (gaz, max_cells) = (self.gaz, self.max_cells);
        self.cells
            .entry(loc_id.to_owned())
            .or_insert_with(|| {
                let rec = gaz.get(loc_id)?;
                match rec.geohashes_capped(GEOHASH_LEN, max_cells) {
                    Ok(c) => Some(c),
                    Err(e) => {
                        log::debug!("skipping {loc_id} for affinity: {e}");
                        None
                    }
                }
            })
            .as_ref()
    }
}

#[derive(Clone)]
pub struct AffinityBuilder<'a> {
    pub gazetteer: &'a Gazetteer,
    pub geocoder: &'a dyn Geocoder,
    pub params: AffinityParams,
    pub trim_words: usize,
    pub max_cover_cells: usize,
}

impl<'a> AffinityBuilder<'a> {
    pub fn new(gazetteer: &'a Gazetteer, geocoder: &'a dyn Geocoder, params: AffinityParams) -> Self {
        AffinityBuilder {
            gazetteer,
            geocoder,
            params,
            trim_words: DEFAULT_TRIM_WORDS,
            max_cover_cells: DEFAULT_MAX_COVER_CELLS,
        }
    }

    /// Runs detection on each article, then hands off to [`Self::from_locations`].
    pub fn build(&self, publisher: &str, articles: &[Article]) -> Result<Option<AffinityEntry>> {
        self.params.validate()?;
        if let Some(a) = articles.iter().find(|a| a.publisher != publisher) {
            return Err(Error::validation(format!(
                "article {} belongs to {}, not {publisher}",
                a.id, a.publisher
            )));
        }
        if articles.len() < self.params.min_articles {
            return Ok(None);
        }
        let mut per_article = Vec::with_capacity(articles.len());
        let mut failed = 0;
        for a in articles {
            match article_locations(a, self.gazetteer, self.geocoder, self.trim_words) {
                Ok(ids) => per_article.push(ids),
                Err(e) => {
                    log::warn!("affinity {publisher}: article {} skipped: {e}", a.id);
                    failed += 1;
                }
            }
        }
        if failed * 2 > articles.len() {
            return Err(Error::AffinityBuild {
                publisher: publisher.to_owned(),
                failed,
                total: articles.len(),
            });
        }
        Ok(self.from_locations(publisher, &per_article))
    }

    /// The filtering half of the pipeline, given each article's detected
    /// loc_ids.
    pub fn from_locations(&self, publisher: &str, per_article: &[BTreeSet<String>]) -> Option<AffinityEntry> {
        let gaz = self.gazetteer;
        let mut cells = CellCache {
            gaz,
            max_cells: self.max_cover_cells,
            cells: BTreeMap::new(),
        };

        // article counts per length-3 prefix
        let mut prefix_counts: BTreeMap<String, usize> = BTreeMap::new();
        for ids in per_article {
            let mut prefixes = BTreeSet::new();
            for id in ids {
                if let Some(c) = cells.get(id) {
                    prefixes.extend(c.iter().map(|g| g.as_str()[..PREFIX_LEN].to_owned()));
                }
            }
            for p in prefixes {
                *prefix_counts.entry(p).or_default() += 1;
            }
        }
        if prefix_counts.is_empty() {
            return None;
        }
        let kept_prefixes = gap_ratio_filter(&prefix_counts, self.params.tau_geohash3).ok()?;

        // locations with at least one surviving cell, per article
        let surviving: Vec<Vec<&LocationRecord>> = per_article
            .iter()
            .map(|ids| {
                ids.iter()
                    .filter(|id| {
                        cells.get(id).is_some_and(|c| {
                            c.iter().any(|g| kept_prefixes.contains(&g.as_str()[..PREFIX_LEN]))
                        })
                    })
                    .filter_map(|id| gaz.get(id))
                    .collect()
            })
            .collect();

        let mut county_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut state_counts: BTreeMap<String, usize> = BTreeMap::new();
        for recs in &surviving {
            let counties: BTreeSet<_> = recs.iter().filter_map(|r| r.chain_key(Level::CountyOrDistrict)).collect();
            let states: BTreeSet<_> = recs.iter().filter_map(|r| r.chain_key(Level::State)).collect();
            for c in counties {
                *county_counts.entry(c).or_default() += 1;
            }
            for s in states {
                *state_counts.entry(s).or_default() += 1;
            }
        }
        if state_counts.is_empty() {
            return None;
        }
        let kept_states = gap_ratio_filter(&state_counts, self.params.tau_admin).ok()?;
        let kept_counties: BTreeSet<String> = if county_counts.is_empty() {
            BTreeSet::new()
        } else {
            gap_ratio_filter(&county_counts, self.params.tau_admin)
                .ok()?
                .into_iter()
                .filter(|c| kept_states.contains(&parent_key(c)))
                .collect()
        };

        // roll surviving locations up to their kept county, or to their kept
        // state when that state has no kept county
        let states_with_county: BTreeSet<String> = kept_counties.iter().map(|c| parent_key(c)).collect();
        let mut support: BTreeMap<String, usize> = BTreeMap::new();
        for recs in &surviving {
            let mut units = BTreeSet::new();
            for r in recs {
                let county = r.chain_key(Level::CountyOrDistrict).filter(|c| kept_counties.contains(c));
                let state = r
                    .chain_key(Level::State)
                    .filter(|s| kept_states.contains(s) && !states_with_county.contains(s));
                for key in county.into_iter().chain(state) {
                    match gaz.by_chain(&key) {
                        Some(unit) => {
                            units.insert(unit.loc_id.clone());
                        }
                        None => {
                            units.insert(r.loc_id.clone());
                        }
                    }
                }
            }
            for u in units {
                *support.entry(u).or_default() += 1;
            }
        }

        let mut locations = BTreeSet::new();
        let mut geohashes = BTreeSet::new();
        for id in support.keys() {
            if let Some(c) = cells.get(id) {
                locations.insert(id.clone());
                geohashes.extend(c.iter().cloned());
            }
        }
        support.retain(|id, _| locations.contains(id));
        if locations.is_empty() {
            return None;
        }
        Some(AffinityEntry {
            publisher: publisher.to_owned(),
            locations,
            geohashes,
            support,
        })
    }
}

/// `King County>Washington>United States` → `Washington>United States`.
fn parent_key(key: &str) -> String {
    key.split_once(crate::gazetteer::CHAIN_SEP)
        .map(|(_, rest)| rest.to_owned())
        .unwrap_or_default()
}

pub fn build_affinity(
    publisher: &str,
    articles: &[Article],
    gaz: &Gazetteer,
    geocoder: &dyn Geocoder,
    params: &AffinityParams,
) -> Result<Option<AffinityEntry>> {
    AffinityBuilder::new(gaz, geocoder, params.clone()).build(publisher, articles)
}

/// Articles of `publisher` within `window` before its newest article.
pub fn windowed<'a>(articles: &'a [Article], publisher: &str, window: Duration) -> Vec<Article> {
    let mine: Vec<&'a Article> = articles.iter().filter(|a| a.publisher == publisher).collect();
    let Some(newest) = mine.iter().map(|a| a.published_at).max() else {
        return Vec::new();
    };
    let start: DateTime<Utc> = newest - window;
    mine.into_iter()
        .filter(|a| a.published_at >= start)
        .cloned()
        .collect()
}

pub type AffinityMap = BTreeMap<String, AffinityEntry>;

pub fn load_affinity(path: &Path) -> Result<AffinityMap> {
    let loaded = corpus::load_jsonl(path, |e: &AffinityEntry| {
        if e.geohashes.iter().any(|g| g.len() != GEOHASH_LEN) {
            return Err(Error::validation(format!("{}: geohashes must have length 4", e.publisher)));
        }
        Ok(())
    })?;
    Ok(loaded.records.into_iter().map(|e| (e.publisher.clone(), e)).collect())
}

pub fn save_affinity(path: &Path, map: &AffinityMap) -> Result<()> {
    corpus::write_jsonl(path, map.values())
}
