//! Feed-quality metrics: user-to-article distance, nearest-rank percentiles
//! and the ensemble-versus-DMA comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Article, Loaded};
use crate::error::{Error, Result};
use crate::gazetteer::{chain_key_at, Gazetteer, Level};
use crate::geohash::{self, Geohash, LatLon, EARTH_RADIUS_KM};
use crate::stamper::{Source, StampResult, STAMP_LEN};

pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (lat1, lat2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon() - a.lon()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    pub user_point: LatLon,
    /// City, county, state, country; blanks where unknown.
    pub user_geochain: Option<Vec<String>>,
    pub article_id: String,
    pub stamped: BTreeSet<Geohash>,
    pub article_locations: Option<BTreeSet<String>>,
}

/// Distance from the user to the article's stamped area, or `None` for an
/// unstamped article.
///
/// Zero when the user's cell is stamped, or when the user's geochain matches
/// one of the article's locations at that location's own level (city, county
/// or state). Otherwise the smallest distance to a stamped cell center.
pub fn doc_distance_km(imp: &Impression, gaz: &Gazetteer) -> Option<f64> {
    if imp.stamped.is_empty() {
        return None;
    }
    let user_cell = geohash::encode(imp.user_point, STAMP_LEN).expect("length 4 is valid");
    if imp.stamped.contains(&user_cell) {
        return Some(0.0);
    }
    if let (Some(chain), Some(locs)) = (&imp.user_geochain, &imp.article_locations) {
        let same_division = locs.iter().filter_map(|id| gaz.get(id)).any(|rec| {
            rec.level != Level::Country
                && rec.chain_key(rec.level).is_some()
                && chain_key_at(chain, rec.level) == rec.chain_key(rec.level)
        });
        if same_division {
            return Some(0.0);
        }
    }
    imp.stamped
        .iter()
        .map(|g| haversine_km(imp.user_point, g.center()))
        .min_by(f64::total_cmp)
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest value.
pub fn percentile_km(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("percentile of an empty sequence"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::validation(format!("percentile must be in (0, 100], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub n: usize,
    pub p50_km: f64,
    pub p75_km: f64,
    pub zero_fraction: f64,
    pub excluded_unstamped: usize,
}

impl DistanceReport {
    /// With no distances every statistic is reported as zero.
    pub fn from_distances(distances: &[f64], excluded_unstamped: usize) -> Self {
        if distances.is_empty() {
            return DistanceReport {
                n: 0,
                p50_km: 0.0,
                p75_km: 0.0,
                zero_fraction: 0.0,
                excluded_unstamped,
            };
        }
        let zeros = distances.iter().filter(|&&d| d == 0.0).count();
        DistanceReport {
            n: distances.len(),
            p50_km: percentile_km(distances, 50.0).expect("non-empty"),
            p75_km: percentile_km(distances, 75.0).expect("non-empty"),
            zero_fraction: zeros as f64 / distances.len() as f64,
            excluded_unstamped,
        }
    }

    pub fn from_impressions(impressions: &[Impression], gaz: &Gazetteer) -> Self {
        let mut distances = Vec::with_capacity(impressions.len());
        let mut excluded = 0;
        for imp in impressions {
            match doc_distance_km(imp, gaz) {
                Some(d) => distances.push(d),
                None => excluded += 1,
            }
        }
        DistanceReport::from_distances(&distances, excluded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub treatment: DistanceReport,
    pub baseline: DistanceReport,
    /// Treatment minus baseline; negative means the treatment is closer.
    pub delta_p50_km: f64,
    pub delta_p75_km: f64,
    pub delta_zero_fraction: f64,
}

impl Evaluation {
    pub fn compare(treatment: DistanceReport, baseline: DistanceReport) -> Self {
        Evaluation {
            delta_p50_km: treatment.p50_km - baseline.p50_km,
            delta_p75_km: treatment.p75_km - baseline.p75_km,
            delta_zero_fraction: treatment.zero_fraction - baseline.zero_fraction,
            treatment,
            baseline,
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>7} {:>10} {:>10} {:>7} {:>9}", "arm", "n", "p50_km", "p75_km", "zero%", "unstamped");
        for (name, r) in [("treatment", &self.treatment), ("baseline", &self.baseline)] {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>10.2} {:>10.2} {:>6.1}% {:>9}",
                name,
                r.n,
                r.p50_km,
                r.p75_km,
                100.0 * r.zero_fraction,
                r.excluded_unstamped
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>+10.2} {:>+10.2} {:>+6.1}%",
            "delta",
            "",
            self.delta_p50_km,
            self.delta_p75_km,
            100.0 * self.delta_zero_fraction
        );
        out
    }
}

fn pair_key(imp: &Impression) -> (u64, u64, &str) {
    (imp.user_point.lat().to_bits(), imp.user_point.lon().to_bits(), imp.article_id.as_str())
}

/// Paired comparison: both arms must hold the same (user, article) pairs,
/// differing only in how the articles were stamped.
pub fn evaluate(treatment: &[Impression], baseline: &[Impression], gaz: &Gazetteer) -> Result<Evaluation> {
    let mut a: Vec<_> = treatment.iter().map(pair_key).collect();
    let mut b: Vec<_> = baseline.iter().map(pair_key).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(Error::validation(format!(
            "treatment and baseline cover different (user, article) pairs ({} vs {} impressions)",
            treatment.len(),
            baseline.len()
        )));
    }
    Ok(Evaluation::compare(
        DistanceReport::from_impressions(treatment, gaz),
        DistanceReport::from_impressions(baseline, gaz),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaTable {
    pub dmas: BTreeMap<String, BTreeSet<Geohash>>,
    pub publishers: BTreeMap<String, String>,
}

impl DmaTable {
    pub fn validate(&self) -> Result<()> {
        for (publisher, dma) in &self.publishers {
            if !self.dmas.contains_key(dma) {
                return Err(Error::validation(format!("publisher {publisher} maps to unknown DMA {dma}")));
            }
        }
        for (dma, cells) in &self.dmas {
            if let Some(g) = cells.iter().find(|g| g.len() != STAMP_LEN) {
                return Err(Error::validation(format!("DMA {dma}: cell {g} is not length {STAMP_LEN}")));
            }
        }
        Ok(())
    }

    pub fn cells_for(&self, publisher: &str) -> Option<&BTreeSet<Geohash>> {
        self.dmas.get(self.publishers.get(publisher)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: DmaTable = serde_json::from_str(&text).map_err(|e| Error::FileFormat {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable table");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Baseline stamps: every article of a DMA-mapped publisher gets all of its
/// DMA's cells; articles of other publishers keep their given stamp.
pub fn dma_stamps(stamps: &[StampResult], articles: &[Article], table: &DmaTable) -> Vec<StampResult> {
    let publisher: BTreeMap<&str, &str> = articles.iter().map(|a| (a.id.as_str(), a.publisher.as_str())).collect();
    stamps
        .iter()
        .map(|s| {
            let cells = publisher.get(s.article_id.as_str()).and_then(|p| table.cells_for(p));
            match cells {
                Some(cells) => StampResult {
                    article_id: s.article_id.clone(),
                    geohashes: cells.clone(),
                    provenance: cells.iter().map(|g| (g.clone(), [Source::Pub].into())).collect(),
                    rules_fired: if cells.is_empty() { [6].into() } else { [1].into() },
                    locations: BTreeSet::new(),
                },
                None => s.clone(),
            }
        })
        .collect()
}

/// One line of an impressions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geochain: Option<Vec<String>>,
    pub article_id: String,
}

impl ImpressionRecord {
    pub fn point(&self) -> Result<LatLon> {
        LatLon::new(self.lat, self.lon)
    }
}

pub fn load_impressions(path: &Path) -> Result<Loaded<ImpressionRecord>> {
    corpus::load_jsonl(path, |r: &ImpressionRecord| {
        r.point()?;
        if r.article_id.trim().is_empty() {
            return Err(Error::validation("impression without article_id"));
        }
        Ok(())
    })
}

/// Attaches each record's article stamp; articles without a stamp yield an
/// empty stamped set.
pub fn join_impressions(records: &[ImpressionRecord], stamps: &BTreeMap<String, StampResult>) -> Result<Vec<Impression>> {
    records
        .iter()
        .map(|r| {
            let stamp = stamps.get(&r.article_id);
            Ok(Impression {
                user_point: r.point()?,
                user_geochain: r.geochain.clone(),
                article_id: r.article_id.clone(),
                stamped: stamp.map(|s| s.geohashes.clone()).unwrap_or_default(),
                article_locations: stamp.map(|s| s.locations.clone()),
            })
        })
        .collect()
}
