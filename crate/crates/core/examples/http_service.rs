//! Start the feed service on a local port, post a few articles and query
//! the feed over HTTP.
//!
//! cargo run --example http_service

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;

use hyperlocal::app::commands::service_state;
use hyperlocal::app::service::router;
use hyperlocal::app::AppConfig;

async fn call(app: &axum::Router, req: Request<Body>) -> anyhow::Result<String> {
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let body = resp.into_body().collect().await?.to_bytes();
    Ok(format!("{status} {}", String::from_utf8_lossy(&body)))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let mut config = AppConfig::default();
    // start from an empty corpus
    config.paths.corpus = std::env::temp_dir().join("hyperlocal-no-corpus.jsonl");
    let state = service_state(&config)?;
    let app = router(Arc::clone(&state));

    let batch = [
        ("a1", "Tacoma and Seattle officials unveil waterfront plan", "2023-02-01T09:00:00Z"),
        ("a2", "Seattle schools announce schedule changes in Tacoma too", "2023-02-02T09:00:00Z"),
        ("a3", "Crews respond to house fire in Tacoma near Seattle line", "2023-02-03T09:00:00Z"),
        ("a4", "Markets rally as inflation cools", "2023-02-04T09:00:00Z"),
    ]
    .iter()
    .map(|(id, title, ts)| {
        serde_json::json!({"id": id, "title": title, "snippet": "", "body": "", "url": "", "publisher": "wire", "published_at": ts})
            .to_string()
    })
    .collect::<Vec<_>>()
    .join("\n");

    println!("GET /healthz -> {}", call(&app, Request::get("/healthz").body(Body::empty())?).await?);
    println!("POST /articles -> {}", call(&app, Request::post("/articles").body(Body::from(batch))?).await?);
    println!(
        "GET /articles/a1/locations -> {}",
        call(&app, Request::get("/articles/a1/locations").body(Body::empty())?).await?
    );
    for uri in ["/feed?lat=47.2529&lon=-122.4443&count=3", "/feed?lat=39.5&lon=-117.0&count=3"] {
        println!("GET {uri} -> {}", call(&app, Request::get(uri).body(Body::empty())?).await?);
    }
    println!("\nthe same router runs on a socket with `hyperlocal serve --addr 127.0.0.1:8080`");
    Ok(())
}
