//! Geocoding: text query in, located entities with confidence out.
//!
//! [`OfflineGeocoder`] answers from a gazetteer. [`RemoteGeocoder`] wraps any
//! [`Upstream`] transport speaking the JSON wire format below with an LRU
//! cache and a one-second sliding-window QPS gate.
//!
//! Wire response: a JSON array of
//! `{"name", "entityType", "confidence", "point": {"lat","lon"}, "bbox": {"south","west","north","east"}}`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gazetteer::{normalize, Gazetteer};
use crate::geohash::{self, BoundingBox, Geohash, LatLon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Confidence {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeResult {
    #[serde(rename = "name")]
    pub matched_name: String,
    #[serde(rename = "entityType")]
    pub entity_type: String,
    pub confidence: Confidence,
    pub point: LatLon,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeocodeError {
    #[error("geocoder request timed out")]
    Timeout,
    #[error("geocoder rate limit exceeded")]
    RateLimited,
    #[error("geocoder rejected credentials")]
    Auth,
    #[error("malformed geocoder response: {0}")]
    MalformedResponse(String),
    #[error("geocoder transport failure: {0}")]
    Transport(String),
}

pub trait Geocoder: Send + Sync {
    fn geocode(&self, query: &str) -> Result<Vec<GeocodeResult>, GeocodeError>;
}

impl<G: Geocoder + ?Sized> Geocoder for Arc<G> {
    fn geocode(&self, query: &str) -> Result<Vec<GeocodeResult>, GeocodeError> {
        (**self).geocode(query)
    }
}

/// Gazetteer-backed geocoder. A hit on a record's canonical name is `High`,
/// a hit through any other alias `Medium`; it never reports `Low`.
#[derive(Debug, Clone)]
pub struct OfflineGeocoder {
    gazetteer: Arc<Gazetteer>,
}

impl OfflineGeocoder {
    pub fn new(gazetteer: Arc<Gazetteer>) -> Self {
        OfflineGeocoder { gazetteer }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }
}

impl Geocoder for OfflineGeocoder {
    fn geocode(&self, query: &str) -> Result<Vec<GeocodeResult>, GeocodeError> {
        // first-seen order, best confidence per record
        let mut order = Vec::new();
        let mut best: HashMap<String, Confidence> = HashMap::new();
        for m in self.gazetteer.lt_matches(query) {
            for id in m.loc_ids {
                let rec = self.gazetteer.get(&id).expect("match ids come from the gazetteer");
                let conf = if m.alias == normalize(&rec.name) {
                    Confidence::High
                } else {
                    Confidence::Medium
                };
                match best.get_mut(&id) {
                    Some(c) => *c = (*c).max(conf),
                    None => {
                        order.push(id.clone());
                        best.insert(id, conf);
                    }
                }
            }
        }
        Ok(order
            .into_iter()
            .map(|id| {
                let rec = self.gazetteer.get(&id).expect("known id");
                GeocodeResult {
                    matched_name: rec.name.clone(),
                    entity_type: rec.level.entity_type().to_string(),
                    confidence: best[&id],
                    point: rec.point,
                    bbox: rec.bbox,
                }
            })
            .collect())
    }
}

/// Union of the cells covering each result at or above `min_confidence`,
/// each tagged with the best confidence that produced it.
pub fn bma_geohashes(
    results: &[GeocodeResult],
    len: usize,
    min_confidence: Confidence,
    max_cells: usize,
) -> Result<BTreeMap<Geohash, Confidence>> {
    let mut out: BTreeMap<Geohash, Confidence> = BTreeMap::new();
    for r in results.iter().filter(|r| r.confidence >= min_confidence) {
        for g in geohash::cover_capped(&r.bbox, len, max_cells)? {
            let slot = out.entry(g).or_insert(r.confidence);
            *slot = (*slot).max(r.confidence);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocoderConfig {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    pub qps_limit: u32,
    pub timeout_secs: f64,
    pub cache_capacity: usize,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        GeocoderConfig {
            endpoint: String::new(),
            api_key: None,
            qps_limit: 5,
            timeout_secs: 5.0,
            cache_capacity: 10_000,
        }
    }
}

impl GeocoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.qps_limit == 0 {
            return Err(Error::validation("geocoder qps_limit must be positive"));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::validation("geocoder timeout must be positive"));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Applies `{prefix}ENDPOINT`, `{prefix}API_KEY`, `{prefix}QPS`,
    /// `{prefix}TIMEOUT_SECS` and `{prefix}CACHE_CAPACITY` from the environment.
    pub fn apply_env(&mut self, prefix: &str) -> Result<()> {
        let var = |name: &str| std::env::var(format!("{prefix}{name}")).ok();
        let bad = |name: &str, v: &str| Error::validation(format!("{prefix}{name}={v:?} is not valid"));
        if let Some(v) = var("ENDPOINT") {
            self.endpoint = v;
        }
        if let Some(v) = var("API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = var("QPS") {
            self.qps_limit = v.parse().map_err(|_| bad("QPS", &v))?;
        }
        if let Some(v) = var("TIMEOUT_SECS") {
            self.timeout_secs = v.parse().map_err(|_| bad("TIMEOUT_SECS", &v))?;
        }
        if let Some(v) = var("CACHE_CAPACITY") {
            self.cache_capacity = v.parse().map_err(|_| bad("CACHE_CAPACITY", &v))?;
        }
        self.validate()
    }
}

/// Transport to a remote geocoding service. Returns the raw response body.
pub trait Upstream: Send + Sync {
    fn fetch(&self, query: &str, timeout: Duration) -> Result<String, GeocodeError>;
}

/// Plain HTTP/1.1 transport: `GET {endpoint}?q={query}` with an optional
/// bearer token. Only `http://` endpoints are supported.
#[derive(Debug, Clone)]
pub struct HttpUpstream {
    host: String,
    port: u16,
    path: String,
    api_key: Option<String>,
}

impl HttpUpstream {
    pub fn new(endpoint: &str, api_key: Option<String>) -> Result<Self> {
        let rest = endpoint
            .strip_prefix("http://")
            .ok_or_else(|| Error::validation(format!("unsupported geocoder endpoint {endpoint:?}; expected http://")))?;
        let (authority, path) = rest.split_at(rest.find('/').unwrap_or(rest.len()));
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (
                h,
                p.parse()
                    .map_err(|_| Error::validation(format!("bad port in geocoder endpoint {endpoint:?}")))?,
            ),
            None => (authority, 80),
        };
        if host.is_empty() {
            return Err(Error::validation(format!("geocoder endpoint {endpoint:?} has no host")));
        }
        Ok(HttpUpstream {
            host: host.to_owned(),
            port,
            path: if path.is_empty() { "/".into() } else { path.to_owned() },
            api_key,
        })
    }

    fn request(&self, query: &str, timeout: Duration) -> std::io::Result<(u16, String)> {
        use std::io::{Read, Write};
        use std::net::{TcpStream, ToSocketAddrs};
        let addr = (self.host.as_str(), self.port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no address"))?;
        let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        let sep = if self.path.contains('?') { '&' } else { '?' };
        let mut req = format!(
            "GET {}{sep}q={} HTTP/1.1\r\nHost: {}\r\nAccept: application/json\r\nConnection: close\r\n",
            self.path,
            percent_encode(query),
            self.host
        );
        if let Some(key) = &self.api_key {
            req.push_str(&format!("Authorization: Bearer {key}\r\n"));
        }
        req.push_str("\r\n");
        stream.write_all(req.as_bytes())?;
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw)?;
        let text = String::from_utf8_lossy(&raw);
        let (head, body) = text.split_once("\r\n\r\n").unwrap_or((&text, ""));
        let status = head
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no status line"))?;
        if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "chunked responses are not supported",
            ));
        }
        Ok((status, body.to_owned()))
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl Upstream for HttpUpstream {
    fn fetch(&self, query: &str, timeout: Duration) -> Result<String, GeocodeError> {
        match self.request(query, timeout) {
            Ok((200, body)) => Ok(body),
            Ok((401 | 403, _)) => Err(GeocodeError::Auth),
            Ok((429, _)) => Err(GeocodeError::RateLimited),
            Ok((status, _)) => Err(GeocodeError::Transport(format!("HTTP status {status}"))),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
                Err(GeocodeError::Timeout)
            }
            Err(e) => Err(GeocodeError::Transport(e.to_string())),
        }
    }
}

pub fn parse_response(body: &str) -> Result<Vec<GeocodeResult>, GeocodeError> {
    let results: Vec<GeocodeResult> =
        serde_json::from_str(body).map_err(|e| GeocodeError::MalformedResponse(e.to_string()))?;
    if let Some(r) = results.iter().find(|r| !r.bbox.contains(r.point)) {
        return Err(GeocodeError::MalformedResponse(format!(
            "point of {:?} lies outside its bbox",
            r.matched_name
        )));
    }
    Ok(results)
}

pub fn encode_response(results: &[GeocodeResult]) -> String {
    serde_json::to_string(results).expect("results serialize")
}

/// Sliding one-second window over completed upstream calls.
#[derive(Debug)]
struct RateWindow {
    qps: usize,
    finished: VecDeque<Instant>,
}

impl RateWindow {
    /// Time to wait before the next call may start, or `None` if it may start now.
    fn wait_needed(&mut self, now: Instant) -> Option<Duration> {
        let window = Duration::from_secs(1);
        while let Some(&t) = self.finished.front() {
            if t + window <= now {
                self.finished.pop_front();
            } else {
                break;
            }
        }
        if self.finished.len() < self.qps {
            None
        } else {
            Some(self.finished[0] + window - now)
        }
    }
}

/// Cached, throttled client over an [`Upstream`].
///
/// Upstream calls are serialized. A call may only start once fewer than
/// `qps_limit` calls have *finished* within the last second, so call start
/// times are never denser than `qps_limit` per second. Concurrent callers
/// asking for the same query wait on the gate and then find the cached
/// answer, so each distinct query reaches the upstream once.
pub struct RemoteGeocoder<U> {
    upstream: U,
    config: GeocoderConfig,
    cache: Option<Mutex<LruCache<String, Vec<GeocodeResult>>>>,
    gate: Mutex<RateWindow>,
}

impl<U: Upstream> RemoteGeocoder<U> {
    pub fn new(upstream: U, config: GeocoderConfig) -> Result<Self> {
        config.validate()?;
        let cache = NonZeroUsize::new(config.cache_capacity).map(|n| Mutex::new(LruCache::new(n)));
        Ok(RemoteGeocoder {
            upstream,
            gate: Mutex::new(RateWindow {
                qps: config.qps_limit as usize,
                finished: VecDeque::new(),
            }),
            config,
            cache,
        })
    }

    pub fn upstream(&self) -> &U {
        &self.upstream
    }

    fn cached(&self, query: &str) -> Option<Vec<GeocodeResult>> {
        self.cache
            .as_ref()
            .and_then(|c| c.lock().expect("cache lock").get(query).cloned())
    }
}

impl<U: Upstream> Geocoder for RemoteGeocoder<U> {
    fn geocode(&self, query: &str) -> Result<Vec<GeocodeResult>, GeocodeError> {
        if query.trim().is_empty() {
            return Ok(Vec::new());
        }
        if let Some(hit) = self.cached(query) {
            return Ok(hit);
        }
        let mut gate = self.gate.lock().expect("rate gate lock");
        if let Some(hit) = self.cached(query) {
            return Ok(hit);
        }
        while let Some(wait) = gate.wait_needed(Instant::now()) {
            std::thread::sleep(wait);
        }
        let body = self.upstream.fetch(query, self.config.timeout());
        gate.finished.push_back(Instant::now());

        // cache before releasing the gate so a waiter on the same query hits it
        let results = parse_response(&body?)?;
        if let Some(cache) = &self.cache {
            cache
                .lock()
                .expect("cache lock")
                .put(query.to_owned(), results.clone());
        }
        drop(gate);
        Ok(results)
    }
}

/// In-process stand-in for a remote service: answers with an inner geocoder
/// serialized to the wire format and records every call.
pub struct MockUpstream<G> {
    inner: G,
    latency: Duration,
    failures: Mutex<HashMap<String, GeocodeError>>,
    calls: Mutex<Vec<(Instant, String)>>,
}

impl<G: Geocoder> MockUpstream<G> {
    pub fn new(inner: G) -> Self {
        MockUpstream {
            inner,
            latency: Duration::ZERO,
            failures: Mutex::new(HashMap::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Makes every call for `query` fail with `err`.
    pub fn fail_with(&self, query: &str, err: GeocodeError) {
        self.failures
            .lock()
            .expect("failures lock")
            .insert(query.to_owned(), err);
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("calls lock").len()
    }

    pub fn call_times(&self) -> Vec<Instant> {
        self.calls.lock().expect("calls lock").iter().map(|c| c.0).collect()
    }

    pub fn queries(&self) -> BTreeSet<String> {
        self.calls.lock().expect("calls lock").iter().map(|c| c.1.clone()).collect()
    }
}

impl<G: Geocoder> Upstream for MockUpstream<G> {
    fn fetch(&self, query: &str, timeout: Duration) -> Result<String, GeocodeError> {
        self.calls
            .lock()
            .expect("calls lock")
            .push((Instant::now(), query.to_owned()));
        if self.latency > timeout {
            std::thread::sleep(timeout);
            return Err(GeocodeError::Timeout);
        }
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        if let Some(err) = self.failures.lock().expect("failures lock").get(query) {
            return Err(err.clone());
        }
        Ok(encode_response(&self.inner.geocode(query)?))
    }
}

/// Largest number of timestamps falling in any half-open one-second window.
pub fn max_per_second(times: &[Instant]) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= Duration::from_secs(1) {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}
