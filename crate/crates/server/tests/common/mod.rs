#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use relqa_core::analysis::Analyzer;
use relqa_core::config::PipelineConfig;
use relqa_core::index::{read_corpus_jsonl, Index};
use relqa_core::pipeline::Pipeline;
use relqa_server::{router, AppState};
use serde_json::Value;

pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus.jsonl")
}

/// Persists the fixture corpus into `dir` and returns the index path.
pub fn fixture_index(dir: &Path) -> PathBuf {
    let out = dir.join("index.bin");
    Index::ingest(read_corpus_jsonl(&fixture_corpus()).unwrap())
        .unwrap()
        .persist(&out)
        .unwrap();
    out
}

/// Serves the router for `config` on an ephemeral port; returns the base URL.
pub fn serve(config: PipelineConfig, static_dir: Option<PathBuf>) -> String {
    let pipeline = Pipeline::from_config(&config, Analyzer::english()).unwrap();
    let app = router(Arc::new(AppState { pipeline, config }), static_dir);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{addr}")
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn post(url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn get(url: &str) -> (u16, String) {
    let mut resp = agent().get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}
