//! Offline replay: serve the same user requests from two indexes and score
//! each served article against its ground-truth location.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Article, Loaded};
use crate::error::{Error, Result};
use crate::gazetteer::Gazetteer;
use crate::geohash::{Geohash, LatLon};
use crate::metrics::{DistanceReport, Evaluation, Impression};
use crate::serving::{build_index_at, serve, FeedSource, PopularCity};
use crate::stamper::StampResult;

/// One feed request of a simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRequest {
    pub user_id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geochain: Option<Vec<String>>,
    pub count: usize,
}

impl FeedRequest {
    pub fn point(&self) -> Result<LatLon> {
        LatLon::new(self.lat, self.lon)
    }
}

/// Where an article is really about: gazetteer records and their cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub article_id: String,
    pub publisher: String,
    pub kind: String,
    pub loc_ids: BTreeSet<String>,
    pub cells: BTreeSet<Geohash>,
}

pub fn load_requests(path: &Path) -> Result<Loaded<FeedRequest>> {
    corpus::load_jsonl(path, |r: &FeedRequest| {
        r.point()?;
        if r.count == 0 {
            return Err(Error::validation("request count must be positive"));
        }
        Ok(())
    })
}

pub fn load_truth(path: &Path) -> Result<BTreeMap<String, TruthRecord>> {
    let loaded = corpus::load_jsonl(path, |_: &TruthRecord| Ok(()))?;
    Ok(loaded.records.into_iter().map(|t| (t.article_id.clone(), t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub report: DistanceReport,
    pub impressions: usize,
    pub backfill_responses: usize,
    /// Served articles with no ground truth.
    pub unknown_articles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub evaluation: Evaluation,
    pub treatment: ArmOutcome,
    pub baseline: ArmOutcome,
    pub requests: usize,
}

impl ReplayReport {
    pub fn table(&self) -> String {
        format!(
            "requests {}; impressions treatment {} / baseline {}; backfilled responses {} / {}\n{}",
            self.requests,
            self.treatment.impressions,
            self.baseline.impressions,
            self.treatment.backfill_responses,
            self.baseline.backfill_responses,
            self.evaluation.table()
        )
    }
}

pub struct ReplaySetup<'a> {
    pub articles: &'a [Article],
    pub requests: &'a [FeedRequest],
    pub cities: &'a [PopularCity],
    pub truth: &'a BTreeMap<String, TruthRecord>,
    pub gazetteer: &'a Gazetteer,
    pub min_k: usize,
}

impl ReplaySetup<'_> {
    /// Serves every request from an index built over `stamps` and scores
    /// the impressions against ground truth.
    pub fn run_arm(&self, stamps: &[StampResult]) -> Result<(ArmOutcome, Vec<Impression>)> {
        let built_at = self
            .articles
            .iter()
            .map(|a| a.published_at)
            .max()
            .unwrap_or_default();
        let index = build_index_at(stamps, self.articles, built_at)?;
        let mut impressions = Vec::new();
        let mut backfill_responses = 0;
        let mut unknown_articles = 0;
        for req in self.requests {
            let user = req.point()?;
            let resp = serve(user, req.count, &index, self.cities, self.min_k)?;
            if resp.source == FeedSource::Backfill {
                backfill_responses += 1;
            }
            for id in resp.articles {
                let truth = self.truth.get(&id);
                if truth.is_none() {
                    unknown_articles += 1;
                }
                impressions.push(Impression {
                    user_point: user,
                    user_geochain: req.geochain.clone(),
                    article_id: id,
                    stamped: truth.map(|t| t.cells.clone()).unwrap_or_default(),
                    article_locations: truth.map(|t| t.loc_ids.clone()),
                });
            }
        }
        let report = DistanceReport::from_impressions(&impressions, self.gazetteer);
        Ok((
            ArmOutcome {
                report,
                impressions: impressions.len(),
                backfill_responses,
                unknown_articles,
            },
            impressions,
        ))
    }

    pub fn compare(&self, treatment: &[StampResult], baseline: &[StampResult]) -> Result<ReplayReport> {
        let (t, _) = self.run_arm(treatment)?;
        let (b, _) = self.run_arm(baseline)?;
        Ok(ReplayReport {
            evaluation: Evaluation::compare(t.report.clone(), b.report.clone()),
            treatment: t,
            baseline: b,
            requests: self.requests.len(),
        })
    }
}
