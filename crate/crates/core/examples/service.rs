//! Drives the HTTP API in-process. Pass `--listen` to serve on
//! 127.0.0.1:8080 instead.

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;
use vulnscape::service::{router, serve, AppState};
use vulnscape::synth::EdiFixture;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let state = AppState::new(EdiFixture::default().generate(0).dataset, None);
    if std::env::args().any(|a| a == "--listen") {
        serve("127.0.0.1:8080".parse()?, state).await?;
        return Ok(());
    }
    let app = router(state);
    let requests = [
        Request::get("/api/health").body(Body::empty())?,
        Request::post("/api/cluster")
            .header("content-type", "application/json")
            .body(Body::from(r#"{"wave": 5, "seed": 1}"#))?,
    ];
    for req in requests {
        let uri = req.uri().clone();
        let res = app.clone().oneshot(req).await?;
        let status = res.status();
        let body = res.into_body().collect().await?.to_bytes();
        let text = String::from_utf8_lossy(&body);
        println!("{uri} -> {status}: {}", &text[..text.len().min(300)]);
    }
    Ok(())
}
