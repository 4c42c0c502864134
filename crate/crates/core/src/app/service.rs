//! HTTP service over an atomically swapped index snapshot.
//!
//! `GET /feed?lat=&lon=&count=`, `GET /articles/{id}/locations`,
//! `POST /articles` (line-delimited articles) and `GET /healthz`.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::app::pipeline::Engine;
use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::geohash::LatLon;
use crate::serving::{build_index_at, serve, FeedIndex, FeedResponse, PopularCity};
use crate::stamper::{RuleHistogram, StampResult};

pub struct Snapshot {
    pub articles: BTreeMap<String, Article>,
    pub stamps: BTreeMap<String, StampResult>,
    pub index: FeedIndex,
}

impl Snapshot {
    fn build(articles: BTreeMap<String, Article>, stamps: BTreeMap<String, StampResult>) -> Result<Self> {
        let list: Vec<Article> = articles.values().cloned().collect();
        let stamp_list: Vec<StampResult> = stamps.values().cloned().collect();
        let index = build_index_at(&stamp_list, &list, Utc::now())?;
        Ok(Snapshot { articles, stamps, index })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub received: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub stamped: usize,
    pub unstamped: usize,
    pub total_articles: usize,
}

pub struct ServiceState {
    pub engine: Engine,
    pub cities: Vec<PopularCity>,
    snapshot: RwLock<Arc<Snapshot>>,
    ingest_lock: tokio::sync::Mutex<()>,
}

impl ServiceState {
    /// Stamps `articles` and builds the first snapshot.
    pub fn new(engine: Engine, cities: Vec<PopularCity>, articles: Vec<Article>) -> Result<Self> {
        let run = engine.stamp_corpus(&articles)?;
        let stamps = run.stamps.into_iter().map(|s| (s.article_id.clone(), s)).collect();
        let articles = articles.into_iter().map(|a| (a.id.clone(), a)).collect();
        Ok(ServiceState {
            engine,
            cities,
            snapshot: RwLock::new(Arc::new(Snapshot::build(articles, stamps)?)),
            ingest_lock: tokio::sync::Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn feed(&self, user: LatLon, count: usize) -> Result<FeedResponse> {
        let snap = self.snapshot();
        serve(user, count, &snap.index, &self.cities, self.engine.config.min_k)
    }

    /// Parses, stamps and merges a line-delimited batch, then swaps in a
    /// rebuilt snapshot. Articles with an existing id replace the old one.
    /// Callers must serialize ingestion; the HTTP handler does.
    pub fn ingest_lines(&self, body: &str) -> Result<IngestCounts> {
        let mut counts = IngestCounts::default();
        let mut batch = Vec::new();
        for line in body.lines().filter(|l| !l.trim().is_empty()) {
            counts.received += 1;
            match serde_json::from_str::<Article>(line)
                .map_err(|e| Error::validation(e.to_string()))
                .and_then(|a| a.validate().map(|_| a))
            {
                Ok(a) => batch.push(a),
                Err(e) => {
                    log::warn!("rejected article line: {e}");
                    counts.rejected += 1;
                }
            }
        }
        counts.accepted = batch.len();
        let run = self.engine.stamp_corpus(&batch)?;
        let mut hist = RuleHistogram::default();
        let current = self.snapshot();
        let mut articles = current.articles.clone();
        let mut stamps = current.stamps.clone();
        for (a, s) in batch.into_iter().zip(run.stamps) {
            hist.add(&s);
            if s.is_empty() {
                counts.unstamped += 1;
            } else {
                counts.stamped += 1;
            }
            stamps.insert(a.id.clone(), s);
            articles.insert(a.id.clone(), a);
        }
        counts.total_articles = articles.len();
        let next = Arc::new(Snapshot::build(articles, stamps)?);
        *self.snapshot.write().expect("snapshot lock") = next;
        log::info!("ingested {} articles ({hist})", counts.accepted);
        Ok(counts)
    }
}

#[derive(Debug, Deserialize)]
struct FeedParams {
    lat: f64,
    lon: f64,
    count: Option<usize>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Validation(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn feed(State(state): State<Arc<ServiceState>>, Query(q): Query<FeedParams>) -> Result<Json<FeedResponse>, ApiError> {
    let user = LatLon::new(q.lat, q.lon)?;
    let count = q.count.unwrap_or(state.engine.config.feed_count);
    Ok(Json(state.feed(user, count)?))
}

async fn locations(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Json<StampResult>, ApiError> {
    state
        .snapshot()
        .stamps
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown article {id}")))
}

async fn ingest(State(state): State<Arc<ServiceState>>, body: String) -> Result<Json<IngestCounts>, ApiError> {
    let _guard = state.ingest_lock.lock().await;
    let worker = state.clone();
    let counts = tokio::task::spawn_blocking(move || worker.ingest_lines(&body))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(counts))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/feed", get(feed))
        .route("/articles/{id}/locations", get(locations))
        .route("/articles", post(ingest))
        .with_state(state)
}

pub async fn run(state: Arc<ServiceState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
