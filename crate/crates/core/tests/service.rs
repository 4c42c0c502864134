//! HTTP surface of the feed service, driven in-process.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use hyperlocal::app::pipeline::Engine;
use hyperlocal::app::service::{router, IngestCounts, ServiceState};
use hyperlocal::app::AppConfig;
use hyperlocal::geohash::LatLon;
use hyperlocal::serving::{FeedResponse, FeedSource, PopularCity};
use hyperlocal::stamper::StampResult;

fn state() -> Arc<ServiceState> {
    let engine = Engine::from_config(&AppConfig::default()).unwrap();
    let cities = vec![PopularCity::new("Seattle", LatLon::new(47.6062, -122.3321).unwrap())];
    Arc::new(ServiceState::new(engine, cities, Vec::new()).unwrap())
}

async fn call(state: &Arc<ServiceState>, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn line(id: &str, title: &str, ts: &str) -> String {
    serde_json::json!({
        "id": id,
        "title": title,
        "snippet": "",
        "body": "",
        "url": format!("https://news.example/{id}"),
        "publisher": "wire",
        "published_at": ts,
    })
    .to_string()
}

#[tokio::test]
async fn healthz_says_ok() {
    let (status, body) = call(&state(), get("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"ok");
}

#[tokio::test]
async fn ingest_then_feed_and_locations() {
    let s = state();
    let batch = [
        line("a1", "Seattle and Tacoma leaders sign transit deal", "2023-02-01T10:00:00Z"),
        line("a2", "Bellevue council approves budget in Seattle suburb", "2023-02-02T10:00:00Z"),
        line("a3", "Seattle Tacoma ferry schedule changes", "2023-02-03T10:00:00Z"),
        "{not json".to_string(),
        line("a4", "Markets rally as inflation cools", "2023-02-04T10:00:00Z"),
    ]
    .join("\n");
    let (status, body) = call(&s, Request::post("/articles").body(Body::from(batch)).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let counts: IngestCounts = serde_json::from_slice(&body).unwrap();
    assert_eq!((counts.received, counts.accepted, counts.rejected), (5, 4, 1));
    assert_eq!(counts.stamped + counts.unstamped, 4);
    assert_eq!(counts.total_articles, 4);

    let (status, body) = call(&s, get("/articles/a4/locations")).await;
    assert_eq!(status, StatusCode::OK);
    let r: StampResult = serde_json::from_slice(&body).unwrap();
    assert_eq!(r.rules_fired, [6].into());

    let (status, body) = call(&s, get("/feed?lat=47.6062&lon=-122.3321&count=5")).await;
    assert_eq!(status, StatusCode::OK);
    let feed: FeedResponse = serde_json::from_slice(&body).unwrap();
    let expected = s.feed(LatLon::new(47.6062, -122.3321).unwrap(), 5).unwrap();
    assert_eq!(feed, expected);
    assert!(!feed.articles.is_empty());
    assert!(!feed.articles.contains(&"a4".to_string()));
}

#[tokio::test]
async fn sparse_cell_backfills_from_nearest_city() {
    let s = state();
    let batch = line("a1", "Seattle and Tacoma leaders sign transit deal", "2023-02-01T10:00:00Z");
    call(&s, Request::post("/articles").body(Body::from(batch)).unwrap()).await;
    let (_, body) = call(&s, get("/feed?lat=25.76&lon=-80.19&count=3")).await;
    let feed: FeedResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(feed.source, FeedSource::Backfill);
    assert_eq!(feed.backfill_city.as_deref(), Some("Seattle"));
}

#[tokio::test]
async fn bad_requests() {
    let s = state();
    let (status, body) = call(&s, get("/feed?lat=95&lon=0")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8(body).unwrap().contains("error"));
    let (status, _) = call(&s, get("/feed?lat=10&lon=0&count=0")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, get("/feed?lat=abc&lon=0")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, get("/articles/nope/locations")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reingest_replaces_by_id() {
    let s = state();
    let first = line("a1", "Markets rally as inflation cools", "2023-02-01T10:00:00Z");
    call(&s, Request::post("/articles").body(Body::from(first)).unwrap()).await;
    let second = line("a1", "Seattle and Tacoma leaders sign transit deal", "2023-02-01T10:00:00Z");
    let (_, body) = call(&s, Request::post("/articles").body(Body::from(second)).unwrap()).await;
    let counts: IngestCounts = serde_json::from_slice(&body).unwrap();
    assert_eq!(counts.total_articles, 1);
    let (_, body) = call(&s, get("/articles/a1/locations")).await;
    let r: StampResult = serde_json::from_slice(&body).unwrap();
    assert!(!r.geohashes.is_empty());
}
