//! Deterministic stand-in for the served models.
//!
//! `/rewrite` echoes the prompt segment before `[CTX]`, `/rerank` scores
//! analyzed-term overlap, `/summarize` returns the leading sentences of its
//! input up to `min_length_words`, the same text the extractive baseline picks.

use std::net::SocketAddr;
use std::thread;

use axum::routing::{get, post};
use axum::{Json, Router};
use convsearch_core::answer::crop_sentences;
use convsearch_core::context::CTX_MARKER;
use convsearch_core::rerank::{build_rerank_input_with_budget, fallback_probability};
use convsearch_core::Analyzer;
use tokio::sync::oneshot;

use crate::gateway::wire::*;

pub fn stub_router() -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/rewrite", post(rewrite))
        .route("/rerank", post(rerank))
        .route("/summarize", post(summarize))
}

pub fn echo_rewrite(prompt: &str) -> String {
    let marker = format!(" {CTX_MARKER}");
    prompt.split(marker.as_str()).next().unwrap_or(prompt).trim().to_string()
}

async fn rewrite(Json(req): Json<RewriteRequest>) -> Json<RewriteResponse> {
    Json(RewriteResponse {
        rewritten: Some(echo_rewrite(&req.prompt)),
    })
}

pub fn overlap_scores(pairs: &[RerankPair]) -> Vec<f64> {
    let analyzer = Analyzer::default();
    pairs
        .iter()
        .map(|p| {
            build_rerank_input_with_budget(&p.query, &p.passage, usize::MAX)
                .map(|input| fallback_probability(&analyzer, &input))
                .unwrap_or(0.0)
        })
        .collect()
}

async fn rerank(Json(req): Json<RerankRequest>) -> Json<RerankResponse> {
    Json(RerankResponse {
        scores: Some(overlap_scores(&req.pairs)),
    })
}

pub fn prefix_summary(text: &str, min_words: usize) -> String {
    crop_sentences(text, min_words)
}

async fn summarize(Json(req): Json<SummarizeRequest>) -> Json<SummarizeResponse> {
    Json(SummarizeResponse {
        summary: Some(prefix_summary(&req.text, req.min_length_words)),
    })
}

/// A router served on a background thread with its own runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `router` until the
/// handle is stopped or dropped.
pub fn spawn_router(router: Router, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

pub fn spawn_stub(addr: SocketAddr) -> std::io::Result<ServerHandle> {
    spawn_router(stub_router(), addr)
}
