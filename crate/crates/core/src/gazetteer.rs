//! Location table: curated places with aliases and an admin geochain, plus
//! longest-match alias scanning over free text.
//!
//! Text and aliases are normalised the same way: lowercase, split into
//! alphanumeric tokens, tokens re-joined by a single space. Matching
//! therefore always lands on word boundaries, and punctuation between words
//! ("Seattle's", "Miami-Dade") does not block a match.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geohash::{self, BoundingBox, Geohash, LatLon};

pub const MIN_ALIAS_CHARS: usize = 3;
const GENERIC_WORDS: &[&str] = &[
    "the", "and", "for", "from", "with", "this", "that", "city", "county", "state", "news",
];
pub const CHAIN_SEP: &str = ">";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    City,
    CountyOrDistrict,
    State,
    Country,
}

impl Level {
    /// Number of geochain entries for a record at this level.
    pub fn depth(self) -> usize {
        match self {
            Level::City => 4,
            Level::CountyOrDistrict => 3,
            Level::State => 2,
            Level::Country => 1,
        }
    }

    pub fn entity_type(self) -> &'static str {
        match self {
            Level::City => "City",
            Level::CountyOrDistrict => "County",
            Level::State => "State",
            Level::Country => "Country",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::City => "city",
            Level::CountyOrDistrict => "county_or_district",
            Level::State => "state",
            Level::Country => "country",
        })
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "city" => Ok(Level::City),
            "county_or_district" | "county" | "district" => Ok(Level::CountyOrDistrict),
            "state" => Ok(Level::State),
            "country" => Ok(Level::Country),
            other => Err(Error::validation(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub loc_id: String,
    pub name: String,
    pub aliases: BTreeSet<String>,
    pub level: Level,
    /// Own name first, then county/district, state and country. A city
    /// without a county keeps an empty string in that slot.
    pub geochain: Vec<String>,
    pub bbox: BoundingBox,
    pub point: LatLon,
}

impl LocationRecord {
    /// Geochain suffix starting at `level`, joined with `>`. `None` when the
    /// record sits above `level` or that entry is blank.
    pub fn chain_key(&self, level: Level) -> Option<String> {
        chain_suffix(&self.geochain, level)
    }

    pub fn own_key(&self) -> String {
        self.geochain.join(CHAIN_SEP)
    }

    pub fn geohashes(&self, len: usize) -> Result<BTreeSet<Geohash>> {
        geohash::cover(&self.bbox, len)
    }

    pub fn geohashes_capped(&self, len: usize, max_cells: usize) -> Result<BTreeSet<Geohash>> {
        geohash::cover_capped(&self.bbox, len, max_cells)
    }

    fn check(&self, opts: &GazetteerOptions) -> Vec<String> {
        let mut problems = Vec::new();
        if self.loc_id.trim().is_empty() {
            problems.push("empty loc_id".to_string());
        }
        if self.name.trim().is_empty() {
            problems.push("empty name".to_string());
        }
        if !self.bbox.contains(self.point) {
            problems.push(format!("point {} outside bbox", self.point));
        }
        if self.geochain.len() != self.level.depth() {
            problems.push(format!(
                "{} record needs {} geochain entries, found {}",
                self.level,
                self.level.depth(),
                self.geochain.len()
            ));
        } else {
            for (i, entry) in self.geochain.iter().enumerate() {
                let optional_county = self.level == Level::City && i == 1;
                if entry.trim().is_empty() && !optional_county {
                    problems.push(format!("geochain entry {i} is empty"));
                }
            }
            if self.geochain.first().map(|s| s.as_str()) != Some(self.name.as_str()) {
                problems.push("geochain must start with the record name".to_string());
            }
        }
        for alias in &self.aliases {
            let norm = normalize(alias);
            if norm.is_empty() {
                problems.push(format!("alias {alias:?} has no letters or digits"));
            } else if GENERIC_WORDS.contains(&norm.as_str()) {
                problems.push(format!("alias {alias:?} is a generic word"));
            } else if norm.chars().count() < MIN_ALIAS_CHARS
                && !opts.short_alias_whitelist.contains(&norm)
            {
                problems.push(format!(
                    "alias {alias:?} shorter than {MIN_ALIAS_CHARS} characters"
                ));
            }
        }
        problems
    }
}

fn chain_suffix(chain: &[String], level: Level) -> Option<String> {
    let depth = level.depth();
    if chain.len() < depth {
        return None;
    }
    let suffix = &chain[chain.len() - depth..];
    if suffix[0].trim().is_empty() {
        return None;
    }
    Some(suffix.join(CHAIN_SEP))
}

/// Geochain suffix of a user or arbitrary chain at `level`.
pub fn chain_key_at(chain: &[String], level: Level) -> Option<String> {
    chain_suffix(chain, level)
}

/// Lowercase alphanumeric tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
    start: usize,
    end: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push(Token {
                    text: text[s..i].to_lowercase(),
                    start: s,
                    end: i,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: text[s..].to_lowercase(),
            start: s,
            end: text.len(),
        });
    }
    tokens
}

#[derive(Debug, Clone, Default)]
pub struct GazetteerOptions {
    /// Normalised aliases allowed below [`MIN_ALIAS_CHARS`].
    pub short_alias_whitelist: BTreeSet<String>,
}

/// One alias occurrence found in text. `start..end` are byte offsets into
/// the scanned text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasMatch {
    pub alias: String,
    pub start: usize,
    pub end: usize,
    pub loc_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    records: Vec<LocationRecord>,
    by_id: HashMap<String, usize>,
    alias_index: HashMap<String, BTreeSet<usize>>,
    chain_index: HashMap<String, usize>,
    max_alias_tokens: usize,
}

impl Gazetteer {
    pub fn new(records: Vec<LocationRecord>) -> Result<Self> {
        Self::with_options(records, &GazetteerOptions::default())
    }

    pub fn with_options(mut records: Vec<LocationRecord>, opts: &GazetteerOptions) -> Result<Self> {
        let mut problems = Vec::new();
        for rec in &mut records {
            rec.aliases.insert(rec.name.clone());
            for p in rec.check(opts) {
                problems.push(format!("{}: {p}", rec.loc_id));
            }
        }
        records.sort_by(|a, b| a.loc_id.cmp(&b.loc_id));
        for pair in records.windows(2) {
            if pair[0].loc_id == pair[1].loc_id {
                problems.push(format!("{}: duplicate loc_id", pair[0].loc_id));
            }
        }
        if !problems.is_empty() {
            return Err(Error::validation(problems.join("; ")));
        }

        let mut by_id = HashMap::new();
        let mut alias_index: HashMap<String, BTreeSet<usize>> = HashMap::new();
        let mut chain_index = HashMap::new();
        let mut max_alias_tokens = 0;
        for (i, rec) in records.iter().enumerate() {
            by_id.insert(rec.loc_id.clone(), i);
            chain_index.entry(rec.own_key()).or_insert(i);
            for alias in &rec.aliases {
                let norm = normalize(alias);
                max_alias_tokens = max_alias_tokens.max(norm.split(' ').count());
                alias_index.entry(norm).or_default().insert(i);
            }
        }
        Ok(Gazetteer {
            records,
            by_id,
            alias_index,
            chain_index,
            max_alias_tokens,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_many(&[path], &GazetteerOptions::default())
    }

    /// Loads and merges several gazetteer files into one snapshot.
    pub fn load_many(paths: &[&Path], opts: &GazetteerOptions) -> Result<Self> {
        let mut records = Vec::new();
        for path in paths {
            records.extend(read_records(path)?);
        }
        Self::with_options(records, opts)
    }

    pub fn records(&self) -> &[LocationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, loc_id: &str) -> Option<&LocationRecord> {
        self.by_id.get(loc_id).map(|&i| &self.records[i])
    }

    /// Record whose full geochain equals `key` (e.g. `King County>Washington>United States`).
    pub fn by_chain(&self, key: &str) -> Option<&LocationRecord> {
        self.chain_index.get(key).map(|&i| &self.records[i])
    }

    /// Normalised alias → loc_ids, for inspection.
    pub fn alias_index(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.alias_index
            .iter()
            .map(|(alias, ids)| {
                (
                    alias.clone(),
                    ids.iter().map(|&i| self.records[i].loc_id.clone()).collect(),
                )
            })
            .collect()
    }

    pub fn records_for_alias(&self, alias: &str) -> Vec<&LocationRecord> {
        self.alias_index
            .get(&normalize(alias))
            .map(|ids| ids.iter().map(|&i| &self.records[i]).collect())
            .unwrap_or_default()
    }

    /// Alias occurrences in `text`, longest first; a match overlapping an
    /// already accepted longer one is dropped. Sorted by position.
    pub fn lt_matches(&self, text: &str) -> Vec<AliasMatch> {
        let tokens = tokenize(text);
        let mut candidates = Vec::new();
        for i in 0..tokens.len() {
            let mut key = String::new();
            for len in 1..=self.max_alias_tokens.min(tokens.len() - i) {
                if len > 1 {
                    key.push(' ');
                }
                key.push_str(&tokens[i + len - 1].text);
                if self.alias_index.contains_key(&key) {
                    candidates.push((i, len, key.clone()));
                }
            }
        }
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; tokens.len()];
        let mut accepted = Vec::new();
        for (i, len, key) in candidates {
            if taken[i..i + len].iter().any(|&t| t) {
                continue;
            }
            taken[i..i + len].iter_mut().for_each(|t| *t = true);
            let loc_ids = self.alias_index[&key]
                .iter()
                .map(|&r| self.records[r].loc_id.clone())
                .collect();
            accepted.push(AliasMatch {
                alias: key,
                start: tokens[i].start,
                end: tokens[i + len - 1].end,
                loc_ids,
            });
        }
        accepted.sort_by_key(|m| m.start);
        accepted
    }

    /// Every record named or aliased in `text`, ordered by loc_id.
    pub fn lt_lookup(&self, text: &str) -> Vec<&LocationRecord> {
        let ids: BTreeSet<String> = self
            .lt_matches(text)
            .into_iter()
            .flat_map(|m| m.loc_ids)
            .collect();
        ids.iter().filter_map(|id| self.get(id)).collect()
    }

    /// Smallest record (by bbox area, deeper level first on ties) whose bbox
    /// contains `p`.
    pub fn most_specific_containing(&self, p: LatLon) -> Option<&LocationRecord> {
        self.records
            .iter()
            .filter(|r| r.bbox.contains(p))
            .min_by(|a, b| {
                a.bbox
                    .area_deg2()
                    .total_cmp(&b.bbox.area_deg2())
                    .then(a.level.cmp(&b.level))
                    .then(a.loc_id.cmp(&b.loc_id))
            })
    }

    /// Maps a geocoder hit back to records: same name with a bbox holding the
    /// point, otherwise the most specific city or county containing it.
    pub fn resolve(&self, name: &str, point: LatLon) -> Vec<&LocationRecord> {
        let named: Vec<_> = self
            .records_for_alias(name)
            .into_iter()
            .filter(|r| r.bbox.contains(point))
            .collect();
        if !named.is_empty() {
            return named;
        }
        self.records
            .iter()
            .filter(|r| {
                matches!(r.level, Level::City | Level::CountyOrDistrict) && r.bbox.contains(point)
            })
            .min_by(|a, b| {
                a.bbox
                    .area_deg2()
                    .total_cmp(&b.bbox.area_deg2())
                    .then(a.loc_id.cmp(&b.loc_id))
            })
            .into_iter()
            .collect()
    }

    /// Geochain for a point: the most specific containing record's chain,
    /// padded on the left with blanks to city depth.
    pub fn geochain_for(&self, p: LatLon) -> Option<Vec<String>> {
        let rec = self.most_specific_containing(p)?;
        let mut chain = vec![String::new(); Level::City.depth() - rec.geochain.len()];
        chain.extend(rec.geochain.iter().cloned());
        Some(chain)
    }
}

pub fn location_geohashes(rec: &LocationRecord, len: usize) -> Result<BTreeSet<Geohash>> {
    rec.geohashes(len)
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    loc_id: String,
    name: String,
    aliases: String,
    level: String,
    geochain: String,
    south: f64,
    west: f64,
    north: f64,
    east: f64,
    lat: f64,
    lon: f64,
}

fn tsv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::FileFormat {
            path: path.to_owned(),
            message: e.to_string(),
        })
}

fn row_to_record(row: Row) -> Result<LocationRecord> {
    let aliases = row
        .aliases
        .split('|')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_owned)
        .collect();
    Ok(LocationRecord {
        level: row.level.parse()?,
        geochain: row.geochain.split(CHAIN_SEP).map(|s| s.trim().to_owned()).collect(),
        bbox: BoundingBox::new(row.south, row.west, row.north, row.east)?,
        point: LatLon::new(row.lat, row.lon)?,
        loc_id: row.loc_id,
        name: row.name,
        aliases,
    })
}

/// Parses a gazetteer file without cross-record validation.
pub fn read_records(path: &Path) -> Result<Vec<LocationRecord>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in tsv_reader(path)?.deserialize::<Row>().enumerate() {
        match row.map_err(|e| Error::validation(e.to_string())).and_then(row_to_record) {
            Ok(rec) => out.push(rec),
            Err(e) => problems.push(format!("record {}: {e}", i + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::FileFormat {
            path: path.to_owned(),
            message: problems.join("; "),
        });
    }
    Ok(out)
}

/// Writes records in the same tab-delimited layout `read_records` accepts.
pub fn write_records(path: &Path, records: &[LocationRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::FileFormat {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
    for r in records {
        w.serialize(Row {
            loc_id: r.loc_id.clone(),
            name: r.name.clone(),
            aliases: r.aliases.iter().cloned().collect::<Vec<_>>().join("|"),
            level: r.level.to_string(),
            geochain: r.geochain.join(CHAIN_SEP),
            south: r.bbox.south(),
            west: r.bbox.west(),
            north: r.bbox.north(),
            east: r.bbox.east(),
            lat: r.point.lat(),
            lon: r.point.lon(),
        })
        .map_err(|e| Error::FileFormat {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn record(
        loc_id: &str,
        name: &str,
        aliases: &[&str],
        level: Level,
        chain: &[&str],
        (south, west, north, east): (f64, f64, f64, f64),
    ) -> LocationRecord {
        let bbox = BoundingBox::new(south, west, north, east).unwrap();
        LocationRecord {
            loc_id: loc_id.into(),
            name: name.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            level,
            geochain: chain.iter().map(|s| s.to_string()).collect(),
            bbox,
            point: bbox.center(),
        }
    }

    pub fn small() -> Gazetteer {
        use Level::*;
        Gazetteer::new(vec![
            record("us", "United States", &["USA"], Country, &["United States"], (24.5, -125.0, 49.5, -66.9)),
            record("us-wa", "Washington", &[], State, &["Washington", "United States"], (45.54, -124.85, 49.0, -116.92)),
            record("us-ca", "California", &["Cal"], State, &["California", "United States"], (32.53, -124.48, 42.01, -114.13)),
            record("us-az", "Arizona", &[], State, &["Arizona", "United States"], (31.33, -114.82, 37.0, -109.04)),
            record("us-wa-king", "King County", &[], CountyOrDistrict, &["King County", "Washington", "United States"], (47.08, -122.54, 47.78, -121.06)),
            record("us-wa-king-seattle", "Seattle", &[], City, &["Seattle", "King County", "Washington", "United States"], (47.49, -122.44, 47.73, -122.24)),
            record("us-wa-king-bellevue", "Bellevue", &[], City, &["Bellevue", "King County", "Washington", "United States"], (47.54, -122.22, 47.66, -122.09)),
            record("us-wa-king-sammamish", "Sammamish", &[], City, &["Sammamish", "King County", "Washington", "United States"], (47.56, -122.08, 47.66, -121.99)),
            record("us-or-washington", "Washington County", &[], CountyOrDistrict, &["Washington County", "Oregon", "United States"], (45.32, -123.49, 45.78, -122.74)),
            record("us-or", "Oregon", &[], State, &["Oregon", "United States"], (41.99, -124.6, 46.3, -116.46)),
            record("us-or-clackamas-oregon-city", "Oregon City", &[], City, &["Oregon City", "", "Oregon", "United States"], (45.31, -122.63, 45.37, -122.55)),
            record("us-ca-la-glendale", "Glendale", &[], City, &["Glendale", "Los Angeles County", "California", "United States"], (34.11, -118.30, 34.27, -118.18)),
            record("us-az-maricopa-glendale", "Glendale", &[], City, &["Glendale", "Maricopa County", "Arizona", "United States"], (33.50, -112.34, 33.72, -112.14)),
        ])
        .unwrap()
    }
}
