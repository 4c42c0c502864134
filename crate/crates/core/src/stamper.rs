//! The six-rule ensemble that turns candidate cells from the gazetteer, the
//! geocoder and the publisher affinity map into an article's geohash stamp.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocoder::Confidence;
use crate::geohash::Geohash;

pub const STAMP_LEN: usize = 4;
pub const DEFAULT_PREFIX_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "PUB")]
    Pub,
    #[serde(rename = "LT")]
    Lt,
    #[serde(rename = "BMA")]
    Bma,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Pub => "PUB",
            Source::Lt => "LT",
            Source::Bma => "BMA",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSets {
    /// Gazetteer cells with the record each came from.
    #[serde(default)]
    pub lt: BTreeSet<(Geohash, String)>,
    #[serde(default)]
    pub bma: BTreeSet<(Geohash, Confidence)>,
    /// Affinity cells of the article's publisher; `None` when the publisher
    /// has no affinity entry.
    #[serde(rename = "pub", default)]
    pub publisher: Option<BTreeSet<Geohash>>,
    /// loc_ids behind `publisher`, carried through to the stamp result.
    #[serde(default)]
    pub publisher_locations: BTreeSet<String>,
}

impl CandidateSets {
    fn validate(&self) -> Result<()> {
        let cells = self
            .lt
            .iter()
            .map(|(g, _)| g)
            .chain(self.bma.iter().map(|(g, _)| g))
            .chain(self.publisher.iter().flatten());
        for g in cells {
            if g.len() != STAMP_LEN {
                return Err(Error::validation(format!(
                    "candidate geohash {g} has length {}, expected {STAMP_LEN}",
                    g.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StampResult {
    pub article_id: String,
    pub geohashes: BTreeSet<Geohash>,
    pub provenance: BTreeMap<Geohash, BTreeSet<Source>>,
    pub rules_fired: BTreeSet<u8>,
    /// Gazetteer loc_ids backing the stamp: LT records whose cells were
    /// stamped and the publisher's affinity locations when rule 1 fired.
    #[serde(default)]
    pub locations: BTreeSet<String>,
}

impl StampResult {
    pub fn is_empty(&self) -> bool {
        self.geohashes.is_empty()
    }
}

fn agree<'a>(
    a: impl IntoIterator<Item = &'a Geohash> + Clone,
    b: impl IntoIterator<Item = &'a Geohash> + Clone,
    prefix_len: usize,
) -> bool {
    a.into_iter().any(|x| {
        b.clone()
            .into_iter()
            .any(|y| x.as_str()[..prefix_len] == y.as_str()[..prefix_len])
    })
}

#[derive(Default)]
struct Acc {
    geohashes: BTreeSet<Geohash>,
    provenance: BTreeMap<Geohash, BTreeSet<Source>>,
    rules: BTreeSet<u8>,
}

impl Acc {
    fn fire<'a>(&mut self, rule: u8, stamps: impl IntoIterator<Item = (&'a Geohash, Source)>) -> bool {
        let mut any = false;
        for (g, src) in stamps {
            self.geohashes.insert(g.clone());
            self.provenance.entry(g.clone()).or_default().insert(src);
            any = true;
        }
        if any {
            self.rules.insert(rule);
        }
        any
    }
}

/// Applies the rules cumulatively and returns the union of their stamps.
///
/// 1. publisher mapped: stamp its affinity cells.
/// 2. publisher mapped and some LT cell shares the prefix with an affinity
///    cell: stamp every LT cell.
/// 3. same with High/Medium geocoder cells: stamp every such cell.
/// 4. publisher unmapped and some LT cell shares the prefix with a
///    High/Medium geocoder cell: stamp both sets.
/// 5. publisher unmapped and no LT cells: stamp High geocoder cells.
/// 6. nothing stamped.
///
/// A rule counts as fired only when its condition holds and it stamps at
/// least one cell. Low-confidence geocoder cells never contribute. An empty
/// affinity set is treated as an unmapped publisher.
pub fn stamp(article_id: &str, cands: &CandidateSets, prefix_len: usize) -> Result<StampResult> {
    if prefix_len == 0 || prefix_len > STAMP_LEN {
        return Err(Error::validation(format!(
            "prefix length must be in 1..={STAMP_LEN}, got {prefix_len}"
        )));
    }
    cands.validate()?;

    let lt: Vec<&Geohash> = cands.lt.iter().map(|(g, _)| g).collect();
    let bma_hm: Vec<&Geohash> = cands
        .bma
        .iter()
        .filter(|(_, c)| *c >= Confidence::Medium)
        .map(|(g, _)| g)
        .collect();
    let bma_high: Vec<&Geohash> = cands
        .bma
        .iter()
        .filter(|(_, c)| *c == Confidence::High)
        .map(|(g, _)| g)
        .collect();
    let publisher = cands.publisher.as_ref().filter(|p| !p.is_empty());

    let mut acc = Acc::default();
    let mut lt_used = false;
    let mut pub_used = false;
    match publisher {
        Some(pubs) => {
            pub_used = acc.fire(1, pubs.iter().map(|g| (g, Source::Pub)));
            if agree(lt.iter().copied(), pubs.iter(), prefix_len) {
                lt_used = acc.fire(2, lt.iter().map(|g| (*g, Source::Lt)));
            }
            if agree(bma_hm.iter().copied(), pubs.iter(), prefix_len) {
                acc.fire(3, bma_hm.iter().map(|g| (*g, Source::Bma)));
            }
        }
        None => {
            if agree(lt.iter().copied(), bma_hm.iter().copied(), prefix_len) {
                let stamps = lt
                    .iter()
                    .map(|g| (*g, Source::Lt))
                    .chain(bma_hm.iter().map(|g| (*g, Source::Bma)));
                lt_used = acc.fire(4, stamps);
            }
            if lt.is_empty() {
                acc.fire(5, bma_high.iter().map(|g| (*g, Source::Bma)));
            }
        }
    }
    if acc.geohashes.is_empty() {
        acc.rules.insert(6);
    }

    let mut locations = BTreeSet::new();
    if lt_used {
        locations.extend(cands.lt.iter().map(|(_, id)| id.clone()));
    }
    if pub_used {
        locations.extend(cands.publisher_locations.iter().cloned());
    }
    Ok(StampResult {
        article_id: article_id.to_owned(),
        geohashes: acc.geohashes,
        provenance: acc.provenance,
        rules_fired: acc.rules,
        locations,
    })
}

/// Articles per fired rule, indexed 1..=6 (slot 0 unused).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleHistogram(pub [usize; 7]);

impl RuleHistogram {
    pub fn add(&mut self, result: &StampResult) {
        for &r in &result.rules_fired {
            self.0[r as usize] += 1;
        }
    }

    pub fn get(&self, rule: u8) -> usize {
        self.0[rule as usize]
    }

    pub fn all_fired(&self) -> bool {
        (1..=6).all(|r| self.0[r] > 0)
    }
}

impl fmt::Display for RuleHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (1..=6).map(|r| format!("R{r}={}", self.0[r])).collect();
        f.write_str(&parts.join(" "))
    }
}
