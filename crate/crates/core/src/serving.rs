//! Feed retrieval: an inverted index from length-4 cells to stamped articles,
//! with nearest-popular-city backfill for sparse cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::geohash::{self, Geohash, LatLon};
use crate::metrics::haversine_km;
use crate::stamper::{StampResult, STAMP_LEN};

pub const DEFAULT_MIN_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub article_id: String,
    pub published_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedIndex {
    pub postings: BTreeMap<Geohash, Vec<Posting>>,
    pub built_at: DateTime<Utc>,
}

impl FeedIndex {
    pub fn empty(built_at: DateTime<Utc>) -> Self {
        FeedIndex {
            postings: BTreeMap::new(),
            built_at,
        }
    }

    pub fn postings(&self, cell: &Geohash) -> &[Posting] {
        self.postings.get(cell).map_or(&[], Vec::as_slice)
    }

    pub fn cell_count(&self) -> usize {
        self.postings.len()
    }

    pub fn article_count(&self) -> usize {
        self.postings
            .values()
            .flatten()
            .map(|p| p.article_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

pub fn build_index(stamps: &[StampResult], articles: &[Article]) -> Result<FeedIndex> {
    build_index_at(stamps, articles, Utc::now())
}

/// Posting lists ordered newest first, ties by article id.
pub fn build_index_at(stamps: &[StampResult], articles: &[Article], built_at: DateTime<Utc>) -> Result<FeedIndex> {
    let published: HashMap<&str, DateTime<Utc>> =
        articles.iter().map(|a| (a.id.as_str(), a.published_at)).collect();
    let mut postings: BTreeMap<Geohash, Vec<Posting>> = BTreeMap::new();
    for s in stamps {
        let &published_at = published
            .get(s.article_id.as_str())
            .ok_or_else(|| Error::DanglingArticle(s.article_id.clone()))?;
        for g in &s.geohashes {
            postings.entry(g.clone()).or_default().push(Posting {
                article_id: s.article_id.clone(),
                published_at,
            });
        }
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| {
            b.published_at
                .cmp(&a.published_at)
                .then_with(|| a.article_id.cmp(&b.article_id))
        });
        list.dedup_by(|a, b| a.article_id == b.article_id);
    }
    Ok(FeedIndex { postings, built_at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularCity {
    pub name: String,
    pub point: LatLon,
    pub geohash4: Geohash,
}

impl PopularCity {
    pub fn new(name: &str, point: LatLon) -> Self {
        PopularCity {
            name: name.to_owned(),
            point,
            geohash4: geohash::encode(point, STAMP_LEN).expect("length 4 is valid"),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CityRow {
    name: String,
    lat: f64,
    lon: f64,
}

/// Reads comma-separated `name,lat,lon` rows with a header; `#` starts a
/// comment line.
pub fn load_cities(path: &Path) -> Result<Vec<PopularCity>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut cities = Vec::new();
    for row in reader.deserialize::<CityRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let point = LatLon::new(row.lat, row.lon).map_err(|e| Error::FileFormat {
            path: path.to_owned(),
            message: format!("{}: {e}", row.name),
        })?;
        cities.push(PopularCity::new(&row.name, point));
    }
    Ok(cities)
}

pub fn write_cities(path: &Path, cities: &[PopularCity]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for c in cities {
        w.serialize(CityRow {
            name: c.name.clone(),
            lat: c.point.lat(),
            lon: c.point.lon(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::FileFormat {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedSource {
    Local,
    Backfill,
}

impl fmt::Display for FeedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedSource::Local => "local",
            FeedSource::Backfill => "backfill",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedResponse {
    pub articles: Vec<String>,
    pub source: FeedSource,
    pub user_geohash: Geohash,
    pub backfill_city: Option<String>,
}

/// Closest city by great-circle distance, ties broken by name.
pub fn nearest_city(user: LatLon, cities: &[PopularCity]) -> Option<&PopularCity> {
    cities.iter().min_by(|a, b| {
        haversine_km(user, a.point)
            .total_cmp(&haversine_km(user, b.point))
            .then_with(|| a.name.cmp(&b.name))
    })
}

/// Local articles from the user's cell when it holds at least `min_k`;
/// otherwise the local ones first, then the nearest popular city's, without
/// duplicates. With no cities configured the local list is returned as is.
pub fn serve(
    user: LatLon,
    count: usize,
    index: &FeedIndex,
    cities: &[PopularCity],
    min_k: usize,
) -> Result<FeedResponse> {
    if count == 0 {
        return Err(Error::validation("count must be at least 1"));
    }
    let user_geohash = geohash::encode(user, STAMP_LEN)?;
    let local = index.postings(&user_geohash);
    let local_only = |articles: &[Posting]| articles.iter().take(count).map(|p| p.article_id.clone()).collect();
    if local.len() >= min_k {
        return Ok(FeedResponse {
            articles: local_only(local),
            source: FeedSource::Local,
            user_geohash,
            backfill_city: None,
        });
    }
    let Some(city) = nearest_city(user, cities) else {
        return Ok(FeedResponse {
            articles: local_only(local),
            source: FeedSource::Local,
            user_geohash,
            backfill_city: None,
        });
    };
    let mut seen = BTreeSet::new();
    let articles = local
        .iter()
        .chain(index.postings(&city.geohash4))
        .filter(|p| seen.insert(p.article_id.as_str()))
        .take(count)
        .map(|p| p.article_id.clone())
        .collect();
    Ok(FeedResponse {
        articles,
        source: FeedSource::Backfill,
        user_geohash,
        backfill_city: Some(city.name.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stamper::{stamp, CandidateSets};

    fn article(id: &str, ts: i64) -> Article {
        Article {
            id: id.into(),
            title: id.into(),
            snippet: String::new(),
            body: String::new(),
            url: String::new(),
            publisher: "p".into(),
            published_at: DateTime::from_timestamp(ts, 0).unwrap(),
        }
    }

    fn stamped(id: &str, cells: &[&str]) -> StampResult {
        let cands = CandidateSets {
            publisher: Some(cells.iter().map(|c| Geohash::new(c).unwrap()).collect()),
            ..Default::default()
        };
        stamp(id, &cands, 2).unwrap()
    }

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(0, 0).unwrap()
    }

    fn pt(lat: f64, lon: f64) -> LatLon {
        LatLon::new(lat, lon).unwrap()
    }

    #[test]
    fn empty_index() {
        let idx = build_index_at(&[], &[], t0()).unwrap();
        assert_eq!(idx.cell_count(), 0);
    }

    #[test]
    fn article_in_every_stamped_cell() {
        let idx = build_index_at(&[stamped("a", &["c23n", "c22y"])], &[article("a", 10)], t0()).unwrap();
        for c in ["c23n", "c22y"] {
            assert_eq!(idx.postings(&Geohash::new(c).unwrap())[0].article_id, "a");
        }
    }

    #[test]
    fn newest_first_then_id() {
        let stamps = [stamped("old", &["c23n"]), stamped("new", &["c23n"]), stamped("b", &["c23n"]), stamped("a", &["c23n"])];
        let arts = [article("old", 1), article("new", 5), article("b", 3), article("a", 3)];
        let idx = build_index_at(&stamps, &arts, t0()).unwrap();
        let ids: Vec<_> = idx.postings(&Geohash::new("c23n").unwrap()).iter().map(|p| p.article_id.as_str()).collect();
        assert_eq!(ids, ["new", "a", "b", "old"]);
    }

    #[test]
    fn dangling_reference() {
        let err = build_index_at(&[stamped("ghost", &["c23n"])], &[], t0()).unwrap_err();
        assert!(matches!(err, Error::DanglingArticle(id) if id == "ghost"));
    }

    fn seattle_setup() -> (FeedIndex, Vec<PopularCity>) {
        let seattle = pt(47.6062, -122.3321);
        let sea_cell = geohash::encode(seattle, 4).unwrap();
        let mut stamps = Vec::new();
        let mut arts = Vec::new();
        for i in 0..5 {
            stamps.push(stamped(&format!("sea{i}"), &[sea_cell.as_str()]));
            arts.push(article(&format!("sea{i}"), 100 + i));
        }
        // one article local to a small town cell east of the city
        let town = pt(47.9, -121.9);
        stamps.push(stamped("town", &[geohash::encode(town, 4).unwrap().as_str(), sea_cell.as_str()]));
        arts.push(article("town", 50));
        let idx = build_index_at(&stamps, &arts, t0()).unwrap();
        let cities = vec![PopularCity::new("Seattle", seattle), PopularCity::new("Portland", pt(45.5152, -122.6784))];
        (idx, cities)
    }

    #[test]
    fn local_when_enough() {
        let (idx, cities) = seattle_setup();
        let r = serve(pt(47.6062, -122.3321), 3, &idx, &cities, 3).unwrap();
        assert_eq!(r.source, FeedSource::Local);
        assert_eq!(r.articles, ["sea4", "sea3", "sea2"]);
        assert_eq!(r.backfill_city, None);
    }

    #[test]
    fn backfill_from_nearest_city() {
        let (idx, cities) = seattle_setup();
        let r = serve(pt(47.9, -122.9), 4, &idx, &cities, 3).unwrap();
        assert_eq!(r.source, FeedSource::Backfill);
        assert_eq!(r.backfill_city.as_deref(), Some("Seattle"));
        assert_eq!(r.articles, ["sea4", "sea3", "sea2", "sea1"]);
    }

    #[test]
    fn backfill_keeps_local_first_and_dedups() {
        let (idx, cities) = seattle_setup();
        let r = serve(pt(47.9, -121.9), 10, &idx, &cities, 3).unwrap();
        assert_eq!(r.source, FeedSource::Backfill);
        assert_eq!(r.articles, ["town", "sea4", "sea3", "sea2", "sea1", "sea0"]);
    }

    #[test]
    fn empty_everything_is_backfill_with_no_articles() {
        let idx = FeedIndex::empty(t0());
        let cities = vec![PopularCity::new("Seattle", pt(47.6, -122.3))];
        let r = serve(pt(0.0, 0.0), 5, &idx, &cities, 3).unwrap();
        assert_eq!(r.source, FeedSource::Backfill);
        assert!(r.articles.is_empty());
        assert!(serve(pt(0.0, 0.0), 0, &idx, &cities, 3).is_err());
    }

    #[test]
    fn city_ties_break_by_name() {
        let p = pt(10.0, 10.0);
        let cities = vec![PopularCity::new("Zeta", p), PopularCity::new("Alpha", p)];
        assert_eq!(nearest_city(pt(11.0, 11.0), &cities).unwrap().name, "Alpha");
    }

    #[test]
    fn cities_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cities.csv");
        let cities = vec![PopularCity::new("Seattle", pt(47.6062, -122.3321))];
        write_cities(&path, &cities).unwrap();
        assert_eq!(load_cities(&path).unwrap(), cities);
        std::fs::write(&path, "name,lat,lon\nNowhere,95,0\n").unwrap();
        assert!(load_cities(&path).is_err());
    }

    #[test]
    fn response_json_shape() {
        let (idx, cities) = seattle_setup();
        let r = serve(pt(47.9, -122.9), 1, &idx, &cities, 3).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["source"], "backfill");
        assert_eq!(v["backfill_city"], "Seattle");
    }
}
