//! HTTP service over a run's artifacts: read-only graph, report and mode
//! endpoints plus a selection endpoint that records manual failure modes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use failmap::dataset::Meta;
use failmap::pipeline::{
    fold_dir, graph_meta, is_stale, read_artifact, read_json, record_selection, Artifact, GraphDocument,
    ModesDocument, SelectionsDocument, GRAPH_FILE, MODES_FILE, REPORT_FILE, SELECTIONS_FILE,
};
use failmap::Error;

/// Loaded artifacts of one fold.
pub struct AppState {
    dir: PathBuf,
    graph_bytes: Vec<u8>,
    graph: Artifact<GraphDocument>,
    meta: Meta,
    /// Serializes writes to the selections file.
    writer: Mutex<()>,
}

fn startup(msg: String) -> Error {
    Error::Artifact(msg)
}

impl AppState {
    /// Opens `out/fold-{fold}`. Fails when an artifact is missing, a run left
    /// the directory stale, or the artifacts come from different configs.
    pub fn load(out: &Path, fold: usize) -> failmap::Result<AppState> {
        let dir = fold_dir(out, fold);
        for d in [out, dir.as_path()] {
            if is_stale(d) {
                return Err(startup(format!(
                    "{} is marked stale; rerun the pipeline",
                    d.display()
                )));
            }
        }
        for f in [GRAPH_FILE, MODES_FILE, REPORT_FILE] {
            if !dir.join(f).exists() {
                return Err(startup(format!("missing artifact {}", dir.join(f).display())));
            }
        }
        let graph_path = dir.join(GRAPH_FILE);
        let graph_bytes = std::fs::read(&graph_path).map_err(|e| startup(format!("{}: {e}", graph_path.display())))?;
        let graph: Artifact<GraphDocument> = serde_json::from_slice(&graph_bytes)?;
        if graph.kind != "graph" {
            return Err(startup(format!("{} is not a graph document", graph_path.display())));
        }
        let hash = graph.config_hash.as_str();
        read_artifact::<ModesDocument>(&dir.join(MODES_FILE), "modes", Some(hash))?;
        read_artifact::<serde_json::Value>(&dir.join(REPORT_FILE), "fold_report", Some(hash))?;
        let sel = dir.join(SELECTIONS_FILE);
        if sel.exists() {
            read_artifact::<SelectionsDocument>(&sel, "selections", Some(hash))?;
        }
        let meta = graph_meta(&graph.data)?;
        Ok(AppState {
            dir,
            graph_bytes,
            graph,
            meta,
            writer: Mutex::new(()),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn get_graph(State(s): State<Arc<AppState>>) -> Response {
    json_bytes(s.graph_bytes.clone())
}

async fn get_report(State(s): State<Arc<AppState>>) -> Response {
    match std::fs::read(s.dir.join(REPORT_FILE)) {
        Ok(b) => json_bytes(b),
        Err(e) => internal(e),
    }
}

/// The extracted modes followed by every manual selection.
async fn get_modes(State(s): State<Arc<AppState>>) -> Response {
    let _guard = s.writer.lock().await;
    let hash = Some(s.graph.config_hash.as_str());
    let mut doc = match read_artifact::<ModesDocument>(&s.dir.join(MODES_FILE), "modes", hash) {
        Ok(d) => d,
        Err(e) => return internal(e),
    };
    let sel = s.dir.join(SELECTIONS_FILE);
    if sel.exists() {
        match read_json::<Artifact<SelectionsDocument>>(&sel) {
            Ok(extra) => doc.data.modes.extend(extra.data.modes),
            Err(e) => return internal(e),
        }
    }
    Json(doc).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeMembers {
    pub node: usize,
    /// Training-row indices, as used in the graph.
    pub members: Vec<usize>,
    /// The same rows as dataset row ids.
    pub rows: Vec<usize>,
}

async fn get_members(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<usize>) -> Response {
    let doc = &s.graph.data;
    match doc.graph.node(id) {
        Some(n) => Json(NodeMembers {
            node: id,
            members: n.members.clone(),
            rows: n.members.iter().map(|&m| doc.rows[m]).collect(),
        })
        .into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown node id {id}")),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub node_ids: Vec<usize>,
}

async fn post_selection(State(s): State<Arc<AppState>>, Json(req): Json<SelectionRequest>) -> Response {
    let _guard = s.writer.lock().await;
    match record_selection(&s.dir, &s.graph, &s.meta, &req.node_ids) {
        Ok(mode) => (StatusCode::CREATED, Json(mode)).into_response(),
        Err(e @ Error::Selection(_)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => internal(e),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/graph", get(get_graph))
        .route("/api/report", get(get_report))
        .route("/api/modes", get(get_modes))
        .route("/api/node/{id}/members", get(get_members))
        .route("/api/selections", post(post_selection))
        .with_state(Arc::new(state))
}

/// Serves `router` on `bind` until the process is stopped.
pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
