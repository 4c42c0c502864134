//! Property tests for the invariants of each module.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use chrono::DateTime;
use proptest::prelude::*;

use hyperlocal::affinity::gap_ratio_filter;
use hyperlocal::app::pipeline::load_gazetteer;
use hyperlocal::app::AppConfig;
use hyperlocal::corpus::{build_geocode_query, trim_field, Article};
use hyperlocal::gazetteer::{location_geohashes, normalize, Gazetteer};
use hyperlocal::geocoder::{Confidence, Geocoder, OfflineGeocoder};
use hyperlocal::geohash::{cover, decode_bbox, encode, BoundingBox, Geohash, LatLon, ALPHABET};
use hyperlocal::metrics::{doc_distance_km, haversine_km, percentile_km, DistanceReport, Impression};
use hyperlocal::serving::{build_index_at, nearest_city, serve, FeedSource, PopularCity};
use hyperlocal::stamper::{stamp, CandidateSets, Source};

fn gazetteer() -> &'static Arc<Gazetteer> {
    static GAZ: OnceLock<Arc<Gazetteer>> = OnceLock::new();
    GAZ.get_or_init(|| Arc::new(load_gazetteer(&AppConfig::default()).unwrap()))
}

fn point() -> impl Strategy<Value = LatLon> {
    (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(lat, lon)| LatLon::new(lat, lon).unwrap())
}

fn geohash(len: usize) -> impl Strategy<Value = Geohash> {
    proptest::collection::vec(0..32usize, len).prop_map(|ix| {
        let s: String = ix.into_iter().map(|i| ALPHABET[i] as char).collect();
        Geohash::new(&s).unwrap()
    })
}

/// Length-4 cells drawn from a handful of regions so prefixes collide often.
fn cell4() -> impl Strategy<Value = Geohash> {
    (prop::sample::select(vec!["c2", "c3", "9q", "dr"]), geohash(2)).prop_map(|(p, rest)| Geohash::new(&format!("{p}{rest}")).unwrap())
}

fn confidence() -> impl Strategy<Value = Confidence> {
    prop::sample::select(vec![Confidence::Low, Confidence::Medium, Confidence::High])
}

fn candidates() -> impl Strategy<Value = CandidateSets> {
    (
        proptest::collection::btree_set(cell4(), 0..4),
        proptest::collection::btree_set((cell4(), confidence()), 0..4),
        proptest::option::of(proptest::collection::btree_set(cell4(), 1..4)),
    )
        .prop_map(|(lt, bma, publisher)| CandidateSets {
            lt: lt.into_iter().map(|g| (g, "x".to_string())).collect(),
            bma,
            publisher,
            ..Default::default()
        })
}

fn words(max: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z]{1,8}", 0..max).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn encode_decode_contains(p in point(), len in 1usize..=8) {
        let g = encode(p, len).unwrap();
        prop_assert_eq!(g.len(), len);
        prop_assert!(decode_bbox(&g).contains(p));
    }

    #[test]
    fn reencode_center_is_stable(g in (1usize..=8).prop_flat_map(geohash)) {
        prop_assert_eq!(encode(decode_bbox(&g).center(), g.len()).unwrap(), g);
    }

    #[test]
    fn prefixes_nest(g in geohash(8), n in 1usize..=8) {
        let parent = decode_bbox(&g.prefix(n).unwrap());
        prop_assert!(parent.contains_box(&decode_bbox(&g)));
    }

    #[test]
    fn cover_spans_the_box(
        south in -80.0..70.0f64, west in -170.0..160.0f64,
        dh in 0.0..3.0f64, dw in 0.0..6.0f64,
    ) {
        let b = BoundingBox::new(south, west, south + dh, west + dw).unwrap();
        let cells = cover(&b, 4).unwrap();
        prop_assert!(!cells.is_empty());
        for corner in [(b.south(), b.west()), (b.north(), b.east()), (b.south(), b.east()), (b.north(), b.west())] {
            let p = LatLon::new(corner.0, corner.1).unwrap();
            prop_assert!(cells.iter().any(|g| decode_bbox(g).contains(p)));
        }
    }

    #[test]
    fn trim_is_idempotent_and_bounded(f in words(80), n in 1usize..15) {
        let once = trim_field(&f, n);
        prop_assert_eq!(trim_field(&once, n), once.clone());
        prop_assert!(once.split_whitespace().count() <= 2 * n);
    }

    #[test]
    fn query_ignores_url_and_publisher(t in words(40), s in words(40), b in words(120), url in "[a-z]{3,10}", p in "[a-z]{3,10}") {
        let a = Article {
            id: "a".into(),
            title: t,
            snippet: s,
            body: b,
            url: format!("https://{url}.example/x"),
            publisher: p,
            published_at: DateTime::from_timestamp(0, 0).unwrap(),
        };
        let other = Article { url: "https://elsewhere.example/y".into(), publisher: "q".into(), id: "b".into(), ..a.clone() };
        prop_assert_eq!(build_geocode_query(&a), build_geocode_query(&other));
    }

    #[test]
    fn lt_lookup_ignores_case(ix in proptest::collection::vec(0usize..140, 1..4), filler in words(6)) {
        let gaz = gazetteer();
        let names: Vec<&str> = ix.iter().map(|&i| gaz.records()[i % gaz.len()].name.as_str()).collect();
        let text = format!("{filler} {} today", names.join(" and "));
        let ids = |t: &str| gaz.lt_lookup(t).into_iter().map(|r| r.loc_id.clone()).collect::<BTreeSet<_>>();
        prop_assert_eq!(ids(&text), ids(&text.to_uppercase()));
        prop_assert_eq!(ids(&text), ids(&text.to_lowercase()));
    }

    #[test]
    fn matched_aliases_sit_on_word_boundaries(ix in proptest::collection::vec(0usize..140, 1..4), filler in words(6)) {
        let gaz = gazetteer();
        let names: Vec<&str> = ix.iter().map(|&i| gaz.records()[i % gaz.len()].name.as_str()).collect();
        let text = format!("{filler} {}.", names.join(", "));
        let padded = format!(" {} ", normalize(&text));
        for m in gaz.lt_matches(&text) {
            let needle = format!(" {} ", m.alias);
            prop_assert!(padded.contains(&needle), "{} not at a boundary in {}", m.alias, padded);
        }
    }

    #[test]
    fn offline_geocoder_is_a_subset_of_lookup(ix in proptest::collection::vec(0usize..140, 1..4)) {
        let gaz = gazetteer();
        let text = ix.iter().map(|&i| gaz.records()[i % gaz.len()].name.as_str()).collect::<Vec<_>>().join(" and ");
        let lookup: BTreeSet<String> = gaz.lt_lookup(&text).iter().map(|r| r.name.clone()).collect();
        let all_matched: BTreeSet<String> = gaz
            .lt_matches(&text)
            .into_iter()
            .flat_map(|m| m.loc_ids)
            .filter_map(|id| gaz.get(&id).map(|r| r.name.clone()))
            .collect();
        let results = OfflineGeocoder::new(gaz.clone()).geocode(&text).unwrap();
        for r in &results {
            prop_assert!(r.confidence != Confidence::Low);
            prop_assert!(all_matched.contains(&r.matched_name));
        }
        prop_assert!(lookup.iter().all(|n| results.iter().any(|r| &r.matched_name == n)));
    }

    #[test]
    fn gap_filter_keeps_a_head(counts in proptest::collection::btree_map("[a-e]{1,2}", 1usize..300, 1..10), tau in 0.01..1.0f64) {
        let kept = gap_ratio_filter(&counts, tau).unwrap();
        prop_assert!(!kept.is_empty());
        let min_kept = kept.iter().map(|k| counts[k]).min().unwrap();
        for (k, c) in &counts {
            if !kept.contains(k) {
                prop_assert!(*c <= min_kept);
            }
        }
    }

    #[test]
    fn gap_filter_is_monotone_in_tau(counts in proptest::collection::btree_map("[a-e]{1,2}", 1usize..300, 1..10), a in 0.01..1.0f64, b in 0.01..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let kept_hi = gap_ratio_filter(&counts, hi).unwrap();
        prop_assert!(kept_hi.is_subset(&gap_ratio_filter(&counts, lo).unwrap()));
    }

    #[test]
    fn stamper_invents_nothing(c in candidates()) {
        let r = stamp("a", &c, 2).unwrap();
        let mut pool: BTreeSet<Geohash> = c.lt.iter().map(|(g, _)| g.clone()).collect();
        pool.extend(c.bma.iter().map(|(g, _)| g.clone()));
        pool.extend(c.publisher.iter().flatten().cloned());
        prop_assert!(r.geohashes.is_subset(&pool));
        if let Some(p) = &c.publisher {
            prop_assert!(p.is_subset(&r.geohashes));
            prop_assert!(r.rules_fired.contains(&1));
        }
        prop_assert_eq!(r.geohashes.is_empty(), r.rules_fired.contains(&6));
        prop_assert_eq!(r.provenance.keys().cloned().collect::<BTreeSet<_>>(), r.geohashes.clone());
    }

    #[test]
    fn provenance_names_its_sets(c in candidates()) {
        let r = stamp("a", &c, 2).unwrap();
        for (g, sources) in &r.provenance {
            for s in sources {
                let present = match s {
                    Source::Pub => c.publisher.as_ref().is_some_and(|p| p.contains(g)),
                    Source::Lt => c.lt.iter().any(|(l, _)| l == g),
                    Source::Bma => c.bma.iter().any(|(b, conf)| b == g && *conf >= Confidence::Medium),
                };
                prop_assert!(present, "{g} tagged {s:?}");
            }
        }
    }

    #[test]
    fn geocoder_cells_do_not_move_rules_one_and_two(c in candidates()) {
        let with = stamp("a", &c, 2).unwrap();
        let without = stamp("a", &CandidateSets { bma: BTreeSet::new(), ..c.clone() }, 2).unwrap();
        for rule in [1u8, 2] {
            prop_assert_eq!(with.rules_fired.contains(&rule), without.rules_fired.contains(&rule));
        }
    }

    #[test]
    fn uncorroborated_lt_stamps_nothing(c in candidates()) {
        let c = CandidateSets { publisher: None, ..c };
        let agree = c.lt.iter().any(|(l, _)| {
            c.bma.iter().any(|(b, conf)| *conf >= Confidence::Medium && l.as_str()[..2] == b.as_str()[..2])
        });
        if !c.lt.is_empty() && !agree {
            prop_assert!(stamp("a", &c, 2).unwrap().geohashes.is_empty());
        }
    }

    #[test]
    fn haversine_is_symmetric_and_triangular(a in point(), b in point(), c in point()) {
        prop_assert!((haversine_km(a, b) - haversine_km(b, a)).abs() < 1e-6);
        prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
        prop_assert!(haversine_km(a, a).abs() < 1e-9);
    }

    #[test]
    fn percentiles_are_monotone(values in proptest::collection::vec(0.0..5000.0f64, 1..50), p in 1.0..100.0f64, q in 1.0..100.0f64) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(percentile_km(&values, lo).unwrap() <= percentile_km(&values, hi).unwrap());
        let r = DistanceReport::from_distances(&values, 0);
        prop_assert!(r.p50_km <= r.p75_km);
        prop_assert!((0.0..=1.0).contains(&r.zero_fraction));
    }

    #[test]
    fn containment_zeroes_whatever_the_chain(p in point(), chain in proptest::option::of(proptest::collection::vec("[A-Z][a-z]{3}", 1..4))) {
        let cell = encode(p, 4).unwrap();
        let imp = Impression {
            user_point: p,
            user_geochain: chain,
            article_id: "a".into(),
            stamped: [cell].into(),
            article_locations: Some(["us-wa-king".to_string()].into()),
        };
        prop_assert_eq!(doc_distance_km(&imp, gazetteer()), Some(0.0));
    }

    #[test]
    fn nearest_city_matches_a_scan(user in point(), pts in proptest::collection::vec(point(), 1..8)) {
        let cities: Vec<PopularCity> = pts.iter().enumerate().map(|(i, p)| PopularCity::new(&format!("c{i}"), *p)).collect();
        let best = nearest_city(user, &cities).unwrap();
        let d = haversine_km(user, best.point);
        prop_assert!(cities.iter().all(|c| haversine_km(user, c.point) >= d));
    }

    #[test]
    fn serving_invariants(
        cells in proptest::collection::vec(proptest::collection::btree_set(geohash(2).prop_map(|g| Geohash::new(&format!("c2{g}")).unwrap()), 1..3), 1..30),
        user_ix in 0usize..30,
        count in 1usize..12,
        min_k in 1usize..6,
    ) {
        let articles: Vec<Article> = (0..cells.len())
            .map(|i| Article {
                id: format!("a{i:02}"),
                title: String::new(),
                snippet: String::new(),
                body: String::new(),
                url: String::new(),
                publisher: "p".into(),
                published_at: DateTime::from_timestamp(1_000 * (i as i64 % 7), 0).unwrap(),
            })
            .collect();
        let stamps: Vec<_> = articles
            .iter()
            .zip(&cells)
            .map(|(a, c)| stamp(&a.id, &CandidateSets { publisher: Some(c.clone()), ..Default::default() }, 2).unwrap())
            .collect();
        let by_id: BTreeMap<&str, _> = stamps.iter().map(|s| (s.article_id.as_str(), s)).collect();
        let index = build_index_at(&stamps, &articles, DateTime::from_timestamp(10_000, 0).unwrap()).unwrap();
        let target = cells[user_ix % cells.len()].iter().next().unwrap();
        let user = decode_bbox(target).center();
        let cities = vec![PopularCity::new("hub", decode_bbox(&cells[0].iter().next().unwrap().clone()).center())];
        let resp = serve(user, count, &index, &cities, min_k).unwrap();
        prop_assert_eq!(&resp, &serve(user, count, &index, &cities, min_k).unwrap());
        prop_assert!(resp.articles.len() <= count);
        let supply = index.postings(&resp.user_geohash).len();
        prop_assert_eq!(resp.source == FeedSource::Backfill, supply < min_k);
        let local = if resp.source == FeedSource::Local { resp.articles.len() } else { supply.min(resp.articles.len()) };
        for id in &resp.articles[..local] {
            prop_assert!(by_id[id.as_str()].geohashes.contains(&resp.user_geohash));
        }
        if resp.source == FeedSource::Local {
            prop_assert_eq!(resp.articles.len(), count.min(supply));
        }
        let unique: BTreeSet<&String> = resp.articles.iter().collect();
        prop_assert_eq!(unique.len(), resp.articles.len());
    }

    #[test]
    fn record_cells_cover_the_bbox(ix in 0usize..140) {
        let gaz = gazetteer();
        let rec = &gaz.records()[ix % gaz.len()];
        prop_assume!(rec.bbox.area_deg2() < 40.0);
        let cells = location_geohashes(rec, 4).unwrap();
        let b = rec.bbox;
        for (lat, lon) in [(b.south(), b.west()), (b.north(), b.east()), (b.center().lat(), b.center().lon())] {
            let p = LatLon::new(lat, lon).unwrap();
            prop_assert!(cells.iter().any(|g| decode_bbox(g).contains(p)));
        }
    }
}
