//! Read-only HTTP listing over an immutable manifest snapshot.

use super::manifest::Manifest;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot bind server: {0}")]
    Bind(String),
}

/// Running server; dropping the handle or calling `stop` shuts it down.
pub struct ServerHandle {
    pub port: u16,
    server: Arc<tiny_http::Server>,
    worker: Option<std::thread::JoinHandle<()>>,
}

impl std::fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerHandle").field("port", &self.port).finish_non_exhaustive()
    }
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn respond(req: tiny_http::Request, status: u16, content_type: &str, body: String) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], content_type.as_bytes())
        .expect("static header");
    let resp = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    let _ = req.respond(resp);
}

fn handle(req: tiny_http::Request, manifest: &Manifest, json: &str) {
    if req.method() != &tiny_http::Method::Get {
        respond(req, 405, "text/plain", "method not allowed".into());
        return;
    }
    let url = req.url().to_string();
    let path = url.split('?').next().unwrap_or("");
    match path {
        "/health" => respond(req, 200, "text/plain", "ok".into()),
        "/notices" | "/notices/" => respond(req, 200, "application/json", json.to_string()),
        _ => {
            if let Some(run_id) = path.strip_prefix("/notices/") {
                if run_id == manifest.run_id {
                    respond(req, 200, "application/json", json.to_string());
                    return;
                }
                respond(req, 404, "text/plain", format!("unknown run id {run_id}"));
            } else {
                respond(req, 404, "text/plain", "not found".into());
            }
        }
    }
}

/// Serve GET /notices, GET /notices/{run_id} and GET /health on `port`
/// (0 picks a free port). No mutation endpoints exist.
pub fn serve_listing(manifest: Manifest, port: u16) -> Result<ServerHandle, ServeError> {
    let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("in use") {
            ServeError::PortInUse(port)
        } else {
            ServeError::Bind(msg)
        }
    })?;
    let bound = server.server_addr().to_ip().map(|a| a.port()).unwrap_or(port);
    let server = Arc::new(server);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");

    let srv = Arc::clone(&server);
    let worker = std::thread::spawn(move || {
        for req in srv.incoming_requests() {
            handle(req, &manifest, &json);
        }
    });
    Ok(ServerHandle { port: bound, server, worker: Some(worker) })
}
