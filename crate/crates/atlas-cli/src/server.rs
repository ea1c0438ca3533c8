//! JSON-over-HTTP layer for the tool service: `GET /health` and
//! `POST /tools/{name}`. Tool failures are in-band (`status: "error"` with
//! transport 200); only a missing route is a transport-level error.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use atlas_core::tools::ToolService;

pub fn router(service: Arc<ToolService>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tools/{name}", post(tool_call))
        .with_state(service)
}

async fn health(State(service): State<Arc<ToolService>>) -> impl IntoResponse {
    Json(service.health())
}

async fn tool_call(
    State(service): State<Arc<ToolService>>,
    Path(name): Path<String>,
    body: Bytes,
) -> impl IntoResponse {
    let args: serde_json::Value = if body.is_empty() {
        serde_json::json!({})
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => {
                let resp = atlas_core::tools::ToolResponse::error(format!("malformed JSON body: {e}"));
                return Json(serde_json::to_value(resp).expect("serializable"));
            }
        }
    };
    let resp = tokio::task::spawn_blocking(move || service.handle(&name, &args))
        .await
        .unwrap_or_else(|e| atlas_core::tools::ToolResponse::error(format!("handler panicked: {e}")));
    Json(serde_json::to_value(resp).expect("serializable"))
}

/// A running server with its bound address; dropping the handle (or calling
/// [`ServerHandle::shutdown`]) stops it.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
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
        self.stop();
    }
}

/// Start the server on its own runtime thread. Port 0 binds an ephemeral
/// port; the bound address is reported in the handle.
pub fn spawn(service: Arc<ToolService>, port: u16) -> anyhow::Result<ServerHandle> {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .expect("tokio runtime");
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(("127.0.0.1", port)).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = addr_tx.send(Err(anyhow::anyhow!("cannot bind port {port}: {e}")));
                    return;
                }
            };
            let addr = listener.local_addr().expect("bound address");
            let _ = addr_tx.send(Ok(addr));
            let app = router(service);
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            });
            if let Err(e) = serve.await {
                eprintln!("server error: {e}");
            }
        });
    });
    let addr = addr_rx
        .recv()
        .map_err(|_| anyhow::anyhow!("server thread exited before binding"))??;
    Ok(ServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}
