//! Seeded synthetic benchmark: publishers with home counties, articles with
//! known locations, simulated users and a DMA table, all with ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::app::pipeline::{save_publishers, PublisherInfo};
use crate::app::replay::{FeedRequest, TruthRecord};
use crate::corpus::{self, build_geocode_query, Article};
use crate::error::{Error, Result};
use crate::gazetteer::{normalize, Gazetteer, Level, LocationRecord};
use crate::geohash::{Geohash, LatLon};
use crate::metrics::{DmaTable, ImpressionRecord};
use crate::stamper::STAMP_LEN;

/// (publisher id, home county loc_id, DMA id)
pub const LOCAL_PUBLISHERS: &[(&str, &str, &str)] = &[
    ("komo-tv-seattle", "us-wa-king", "seattle-tacoma"),
    ("tacoma-news-tribune", "us-wa-pierce", "seattle-tacoma"),
    ("everett-herald", "us-wa-snohomish", "seattle-tacoma"),
    ("kitsap-sun", "us-wa-kitsap", "seattle-tacoma"),
    ("the-olympian", "us-wa-thurston", "seattle-tacoma"),
    ("spokesman-review", "us-wa-spokane", "spokane"),
    ("the-oregonian", "us-or-multnomah", "portland"),
    ("beaverton-valley-times", "us-or-washington", "portland"),
    ("clackamas-review", "us-or-clackamas", "portland"),
    ("register-guard", "us-or-lane", "eugene"),
    ("la-daily-news", "us-ca-los-angeles", "los-angeles"),
    ("oc-register", "us-ca-orange", "los-angeles"),
    ("sf-chronicle", "us-ca-san-francisco", "sf-bay"),
    ("mercury-news", "us-ca-santa-clara", "sf-bay"),
    ("east-bay-times", "us-ca-alameda", "sf-bay"),
    ("sd-union-tribune", "us-ca-san-diego", "san-diego"),
    ("sacramento-bee", "us-ca-sacramento", "sacramento"),
    ("arizona-republic", "us-az-maricopa", "phoenix"),
    ("arizona-daily-star", "us-az-pima", "tucson"),
    ("houston-chronicle", "us-tx-harris", "houston"),
    ("austin-statesman", "us-tx-travis", "austin"),
    ("chicago-tribune", "us-il-cook", "chicago"),
    ("denver-post", "us-co-denver", "denver"),
    ("jeffco-transcript", "us-co-jefferson", "denver"),
    ("miami-herald", "us-fl-miami-dade", "miami"),
    ("brooklyn-eagle", "us-ny-kings", "new-york"),
    ("manhattan-times", "us-ny-new-york", "new-york"),
];

pub const NATIONAL_PUBLISHERS: &[&str] = &["national-wire", "metro-digest", "sports-desk"];

const REMOTES_PER_PUBLISHER: usize = 3;

const CITY_TITLES: &[&str] = &[
    "Crews respond to house fire in {}",
    "{} council approves new budget",
    "Police investigate overnight shooting in {}",
    "New bakery opens in downtown {}",
    "{} schools announce schedule changes",
    "Road closures planned in {} this weekend",
    "Residents in {} rally for park upgrades",
    "Water main break floods streets in {}",
    "Library expansion breaks ground in {}",
    "Farmers market returns to {}",
];

const COUNTY_TITLES: &[&str] = &[
    "{} commissioners debate transit levy",
    "{} officials warn of flooding risk",
    "Health officials in {} track flu cases",
    "{} sheriff seeks help finding missing hiker",
];

const MULTI_TITLES: &[&str] = &[
    "Traffic between {} and {} snarled after crash",
    "{} and {} agree to share fire services",
];

const IMPLICIT_TITLES: &[&str] = &[
    "Local officials approve new bike lanes",
    "Neighbors rally to save historic theater",
    "Storm knocks out power for thousands overnight",
    "High school team wins title in overtime thriller",
    "Community center reopens after renovation",
    "Ferry delays frustrate morning commuters",
    "Hospital unveils new emergency wing",
];

const NATIONAL_TITLES: &[&str] = &[
    "Tech company plans major office in {}",
    "Wildfire smoke blankets {} for third day",
    "{} hosts national robotics conference",
    "Housing prices in {} climb again",
];

const NEIGHBORHOOD_TITLES: &[&str] = &[
    "Street festival draws crowds in {}",
    "New restaurants reshape dining in {}",
    "Longtime record store in {} closes its doors",
];

const PLACELESS_TITLES: &[&str] = &[
    "Markets rally as inflation cools",
    "Officials weigh new rules for short-term rentals",
    "Airlines brace for busy holiday travel",
];

const FILLER: &[&str] = &[
    "Officials said more details would be released later this week.",
    "Witnesses described a chaotic scene as emergency crews arrived.",
    "The proposal drew both praise and criticism at a packed meeting.",
    "Organizers expect attendance to grow again next year.",
    "Several residents said they had raised concerns for months.",
    "The project is expected to take about eighteen months to complete.",
    "No injuries were reported, according to a spokesperson.",
    "Funding for the effort comes from a mix of grants and local taxes.",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub near_users: usize,
    pub far_users: usize,
    pub feed_count: usize,
    pub end: DateTime<Utc>,
    pub window_days: i64,
}

impl SynthParams {
    pub fn new(seed: u64) -> Self {
        SynthParams {
            seed,
            near_users: 300,
            far_users: 60,
            feed_count: 10,
            end: DateTime::from_timestamp(1_677_628_800, 0).expect("valid timestamp"),
            window_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthOutput {
    pub articles: Vec<Article>,
    pub publishers: Vec<PublisherInfo>,
    pub dma: DmaTable,
    pub requests: Vec<FeedRequest>,
    pub impressions: Vec<ImpressionRecord>,
    pub truth: Vec<TruthRecord>,
}

impl SynthOutput {
    pub fn truth_map(&self) -> BTreeMap<String, TruthRecord> {
        self.truth.iter().map(|t| (t.article_id.clone(), t.clone())).collect()
    }

    /// loc_ids planted as remote singletons, per publisher.
    pub fn remote_singletons(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for t in self.truth.iter().filter(|t| t.kind == "remote") {
            out.entry(t.publisher.clone()).or_default().extend(t.loc_ids.iter().cloned());
        }
        out
    }

    pub const CONFIG_FILE: &'static str = "hyperlocal.toml";

    /// Writes every artifact into `dir` together with a config file whose
    /// paths point at them.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        corpus::write_jsonl(&dir.join("corpus.jsonl"), &self.articles)?;
        save_publishers(&dir.join("publishers.json"), &self.publishers)?;
        self.dma.save(&dir.join("dma.json"))?;
        corpus::write_jsonl(&dir.join("requests.jsonl"), &self.requests)?;
        corpus::write_jsonl(&dir.join("impressions.jsonl"), &self.impressions)?;
        corpus::write_jsonl(&dir.join("truth.jsonl"), &self.truth)?;
        let config = "# Generated by `hyperlocal synth`; paths are relative to this file.\n\
            [paths]\n\
            corpus = \"corpus.jsonl\"\n\
            publishers = \"publishers.json\"\n\
            dma = \"dma.json\"\n\
            affinity = \"affinity.jsonl\"\n\
            stamps = \"stamps.jsonl\"\n\
            requests = \"requests.jsonl\"\n\
            truth = \"truth.jsonl\"\n\
            impressions = \"impressions.jsonl\"\n";
        let path = dir.join(Self::CONFIG_FILE);
        std::fs::write(&path, config).map_err(|e| Error::io(&path, e))
    }
}

struct Planned {
    title: String,
    body: String,
    kind: &'static str,
    truth: Vec<String>,
}

struct World<'a> {
    lt: &'a Gazetteer,
    landmarks: &'a Gazetteer,
    /// City records per county loc_id.
    cities_by_county: BTreeMap<String, Vec<&'a LocationRecord>>,
    /// Normalized aliases owned by more than one record.
    ambiguous: BTreeSet<String>,
}

impl<'a> World<'a> {
    fn new(lt: &'a Gazetteer, landmarks: &'a Gazetteer) -> Self {
        let mut cities_by_county: BTreeMap<String, Vec<&LocationRecord>> = BTreeMap::new();
        for rec in lt.records().iter().filter(|r| r.level == Level::City) {
            let Some(key) = rec.chain_key(Level::CountyOrDistrict) else { continue };
            if let Some(county) = lt.by_chain(&key) {
                cities_by_county.entry(county.loc_id.clone()).or_default().push(rec);
            }
        }
        let ambiguous = lt
            .alias_index()
            .into_iter()
            .filter(|(_, ids)| ids.len() > 1)
            .map(|(alias, _)| alias)
            .collect();
        World {
            lt,
            landmarks,
            cities_by_county,
            ambiguous,
        }
    }

    fn unambiguous(&self, rec: &LocationRecord) -> bool {
        !self.ambiguous.contains(&normalize(&rec.name))
    }

    fn home_cities(&self, county: &str) -> Vec<&'a LocationRecord> {
        self.cities_by_county
            .get(county)
            .map(|v| v.iter().copied().filter(|r| self.unambiguous(r)).collect())
            .unwrap_or_default()
    }

    fn state_of(&self, rec: &LocationRecord) -> Option<String> {
        rec.chain_key(Level::State)
    }

    fn text_mentions(&self, text: &str) -> usize {
        self.lt.lt_matches(text).len() + self.landmarks.lt_matches(text).len()
    }

    fn cells(&self, loc_ids: &[String]) -> BTreeSet<Geohash> {
        loc_ids
            .iter()
            .filter_map(|id| self.lt.get(id).or_else(|| self.landmarks.get(id)))
            .flat_map(|r| r.geohashes(STAMP_LEN).expect("synthetic locations are small"))
            .collect()
    }
}

/// A name to use in text: the canonical name, or sometimes one of the
/// record's other aliases.
fn mention(rec: &LocationRecord, rng: &mut ChaCha8Rng) -> String {
    let others: Vec<&String> = rec.aliases.iter().filter(|a| **a != rec.name).collect();
    if !others.is_empty() && rng.random_bool(0.4) {
        (*others.choose(rng).expect("non-empty")).clone()
    } else {
        rec.name.clone()
    }
}

fn fill(template: &str, names: &[&str]) -> String {
    let mut out = template.to_owned();
    for n in names {
        out = out.replacen("{}", n, 1);
    }
    out
}

fn filler(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences)
        .map(|_| *FILLER.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn pick<'b, T>(rng: &mut ChaCha8Rng, items: &'b [T]) -> &'b T {
    items.choose(rng).expect("non-empty choice")
}

fn local_articles(world: &World, rng: &mut ChaCha8Rng, home: &LocationRecord, neighbors: &[&LocationRecord], remote_pool: &[&LocationRecord]) -> Vec<Planned> {
    let home_cities = world.home_cities(&home.loc_id);
    let n = rng.random_range(40..=60);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n - REMOTES_PER_PUBLISHER {
        let roll: f64 = rng.random();
        let planned = if roll < 0.55 && !home_cities.is_empty() {
            let city = *pick(rng, &home_cities);
            let name = mention(city, rng);
            Planned {
                title: fill(pick(rng, CITY_TITLES), &[&name]),
                body: filler(rng, 3),
                kind: "home_city",
                truth: vec![city.loc_id.clone()],
            }
        } else if roll < 0.65 {
            Planned {
                title: fill(pick(rng, COUNTY_TITLES), &[&home.name]),
                body: filler(rng, 3),
                kind: "home_county",
                truth: vec![home.loc_id.clone()],
            }
        } else if roll < 0.80 {
            Planned {
                title: pick(rng, IMPLICIT_TITLES).to_string(),
                body: filler(rng, 3),
                kind: "implicit",
                truth: vec![home.loc_id.clone()],
            }
        } else if roll < 0.88 && !neighbors.is_empty() {
            let city = *pick(rng, neighbors);
            Planned {
                title: fill(pick(rng, CITY_TITLES), &[&city.name]),
                body: filler(rng, 3),
                kind: "neighbor",
                truth: vec![city.loc_id.clone()],
            }
        } else if home_cities.len() >= 2 {
            let pair: Vec<&&LocationRecord> = home_cities.choose_multiple(rng, 2).collect();
            Planned {
                title: fill(pick(rng, MULTI_TITLES), &[&pair[0].name, &pair[1].name]),
                body: filler(rng, 3),
                kind: "multi",
                truth: vec![pair[0].loc_id.clone(), pair[1].loc_id.clone()],
            }
        } else {
            Planned {
                title: fill(pick(rng, COUNTY_TITLES), &[&home.name]),
                body: filler(rng, 3),
                kind: "home_county",
                truth: vec![home.loc_id.clone()],
            }
        };
        out.push(planned);
    }
    // remote singletons, each in a different state
    let mut used_states = BTreeSet::new();
    let mut remotes = Vec::new();
    let mut pool: Vec<&LocationRecord> = remote_pool.to_vec();
    while remotes.len() < REMOTES_PER_PUBLISHER && !pool.is_empty() {
        let i = rng.random_range(0..pool.len());
        let city = pool.swap_remove(i);
        if used_states.insert(world.state_of(city)) {
            remotes.push(city);
        }
    }
    for city in remotes {
        out.push(Planned {
            title: fill(pick(rng, CITY_TITLES), &[&city.name]),
            body: filler(rng, 3),
            kind: "remote",
            truth: vec![city.loc_id.clone()],
        });
    }
    out
}

fn national_articles(rng: &mut ChaCha8Rng, metro_cities: &[&LocationRecord], landmarks: &[LocationRecord], n: usize) -> Vec<Planned> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let roll: f64 = rng.random();
        let planned = if roll < 0.5 {
            let city = *pick(rng, metro_cities);
            Planned {
                title: fill(pick(rng, NATIONAL_TITLES), &[&city.name]),
                body: filler(rng, 3),
                kind: "national_city",
                truth: vec![city.loc_id.clone()],
            }
        } else if roll < 0.75 {
            let lm = pick(rng, landmarks);
            Planned {
                title: fill(pick(rng, NEIGHBORHOOD_TITLES), &[&lm.name]),
                body: filler(rng, 3),
                kind: "neighborhood",
                truth: vec![lm.loc_id.clone()],
            }
        } else if roll < 0.9 {
            // place named only mid-body, outside the trimmed geocoder query
            let city = *pick(rng, metro_cities);
            let body = format!(
                "{} The debate echoes one held in {} last year. {}",
                filler(rng, 3),
                city.name,
                filler(rng, 3)
            );
            Planned {
                title: pick(rng, PLACELESS_TITLES).to_string(),
                body,
                kind: "mid_body",
                truth: vec![city.loc_id.clone()],
            }
        } else {
            Planned {
                title: pick(rng, PLACELESS_TITLES).to_string(),
                body: filler(rng, 3),
                kind: "placeless",
                truth: Vec::new(),
            }
        };
        out.push(planned);
    }
    out
}

fn uniform_in(rec: &LocationRecord, rng: &mut ChaCha8Rng) -> LatLon {
    let b = rec.bbox;
    let lat = b.south() + rng.random::<f64>() * b.height_deg();
    let lon = b.west() + rng.random::<f64>() * b.width_deg();
    LatLon::new(lat, lon).expect("inside a valid bbox")
}

/// Generates the benchmark. `landmarks` are records the offline geocoder
/// knows but the location table does not.
pub fn generate(params: &SynthParams, lt: &Gazetteer, landmarks: &[LocationRecord]) -> Result<SynthOutput> {
    let landmark_gaz = Gazetteer::new(landmarks.to_vec())?;
    let world = World::new(lt, &landmark_gaz);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let county = |id: &str| {
        lt.get(id)
            .ok_or_else(|| Error::validation(format!("gazetteer lacks county {id}")))
    };
    let mut dma_counties: BTreeMap<&str, Vec<&LocationRecord>> = BTreeMap::new();
    for (_, home, dma) in LOCAL_PUBLISHERS {
        dma_counties.entry(dma).or_default().push(county(home)?);
    }
    let metro_cities: Vec<&LocationRecord> = dma_counties
        .values()
        .flatten()
        .flat_map(|c| world.home_cities(&c.loc_id))
        .collect();
    let all_us_cities: Vec<&LocationRecord> = lt
        .records()
        .iter()
        .filter(|r| r.level == Level::City && r.geochain.last().is_some_and(|c| c == "United States"))
        .filter(|r| world.unambiguous(r))
        .collect();

    let window = params.window_days * 86_400;
    let mut articles = Vec::new();
    let mut truth = Vec::new();
    let mut publishers = Vec::new();
    let mut emit = |publisher: &str, plans: Vec<Planned>, rng: &mut ChaCha8Rng| -> Result<()> {
        for (i, p) in plans.into_iter().enumerate() {
            let id = format!("{publisher}-{i:04}");
            let article = Article {
                url: format!("https://news.example/{publisher}/{id}"),
                id: id.clone(),
                title: p.title,
                snippet: String::new(),
                body: p.body,
                publisher: publisher.to_owned(),
                published_at: params.end - Duration::seconds(rng.random_range(1..=window)),
            };
            if p.kind == "implicit" && world.text_mentions(&article.text()) > 0 {
                return Err(Error::validation(format!("implicit article {id} names a place")));
            }
            if p.kind == "mid_body" && world.text_mentions(&build_geocode_query(&article)) > 0 {
                return Err(Error::validation(format!("mid-body article {id} leaks a place into its query")));
            }
            truth.push(TruthRecord {
                article_id: id,
                publisher: publisher.to_owned(),
                kind: p.kind.to_owned(),
                cells: world.cells(&p.truth),
                loc_ids: p.truth.into_iter().collect(),
            });
            articles.push(article);
        }
        Ok(())
    };

    for (publisher, home_id, dma) in LOCAL_PUBLISHERS {
        let home = county(home_id)?;
        let home_state = world.state_of(home);
        let neighbors: Vec<&LocationRecord> = dma_counties[dma]
            .iter()
            .filter(|c| c.loc_id != home.loc_id)
            .flat_map(|c| world.home_cities(&c.loc_id))
            .collect();
        let remote_pool: Vec<&LocationRecord> = all_us_cities
            .iter()
            .copied()
            .filter(|c| world.state_of(c) != home_state)
            .collect();
        let plans = local_articles(&world, &mut rng, home, &neighbors, &remote_pool);
        emit(publisher, plans, &mut rng)?;
        publishers.push(PublisherInfo {
            id: publisher.to_string(),
            strongly_local: true,
            home_county: Some(home_id.to_string()),
            dma: Some(dma.to_string()),
        });
    }
    for publisher in NATIONAL_PUBLISHERS {
        let plans = national_articles(&mut rng, &metro_cities, landmarks, 60);
        emit(publisher, plans, &mut rng)?;
        publishers.push(PublisherInfo {
            id: publisher.to_string(),
            strongly_local: false,
            home_county: None,
            dma: None,
        });
    }

    let mut dma = DmaTable::default();
    for (id, counties) in &dma_counties {
        let mut cells = BTreeSet::new();
        for c in counties {
            cells.extend(c.geohashes(STAMP_LEN)?);
        }
        dma.dmas.insert(id.to_string(), cells);
    }
    for (publisher, _, d) in LOCAL_PUBLISHERS {
        dma.publishers.insert(publisher.to_string(), d.to_string());
    }

    // users: most live in a covered metro, some anywhere in a US state
    let dma_ids: Vec<&str> = dma_counties.keys().copied().collect();
    let states: Vec<&LocationRecord> = lt
        .records()
        .iter()
        .filter(|r| r.level == Level::State && r.geochain.last().is_some_and(|c| c == "United States"))
        .collect();
    let mut requests = Vec::new();
    let mut user_dma: Vec<Option<&str>> = Vec::new();
    for u in 0..params.near_users + params.far_users {
        let (point, dma_id) = if u < params.near_users {
            let d = *pick(&mut rng, &dma_ids);
            let c = *pick(&mut rng, &dma_counties[d]);
            (uniform_in(c, &mut rng), Some(d))
        } else {
            let state = *pick(&mut rng, &states);
            (uniform_in(state, &mut rng), None)
        };
        requests.push(FeedRequest {
            user_id: format!("u{u:04}"),
            lat: point.lat(),
            lon: point.lon(),
            geochain: lt.geochain_for(point),
            count: params.feed_count,
        });
        user_dma.push(dma_id);
    }

    // paired impressions: each user sees a sample of articles from their
    // metro's publishers and the national desks
    let mut by_dma: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let national: Vec<&str> = articles
        .iter()
        .filter(|a| NATIONAL_PUBLISHERS.contains(&a.publisher.as_str()))
        .map(|a| a.id.as_str())
        .collect();
    for a in &articles {
        if let Some(d) = dma.publishers.get(&a.publisher) {
            by_dma.entry(d.as_str()).or_default().push(a.id.as_str());
        }
    }
    let mut impressions = Vec::new();
    for (req, d) in requests.iter().zip(&user_dma) {
        let mut pool: Vec<&str> = national.clone();
        if let Some(d) = d {
            pool.extend(&by_dma[d]);
        }
        for id in pool.choose_multiple(&mut rng, params.feed_count) {
            impressions.push(ImpressionRecord {
                lat: req.lat,
                lon: req.lon,
                geochain: req.geochain.clone(),
                article_id: id.to_string(),
            });
        }
    }

    articles.sort_by(|a, b| a.id.cmp(&b.id));
    truth.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    Ok(SynthOutput {
        articles,
        publishers,
        dma,
        requests,
        impressions,
        truth,
    })
}
