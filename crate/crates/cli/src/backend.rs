//! The same operations against the local store or a running service.

use pmdss_core::{Baseline, ProgressSnapshot, ProjectId, Role};
use pmdss_service::{
    s_curve_rows, BaselineReceipt, ErrorBody, EventRequest, IndicatorReport, LifecycleView,
    SCurveRow, Service, SnapshotReceipt, StoredProject,
};
use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::CliError;

pub enum Backend {
    Local(Service),
    Remote(Remote),
}

pub struct Remote {
    base: String,
    client: Client,
}

impl Remote {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_owned(),
            client: Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, CliError> {
        let transport = |source| CliError::Transport {
            url: self.base.clone(),
            source,
        };
        let resp = req.send().map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            return resp.json().map_err(transport);
        }
        let text = resp.text().unwrap_or_default();
        let (error, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => (body.error, body.message),
            Err(_) => ("http_error".to_owned(), text),
        };
        Err(CliError::Remote {
            status: status.as_u16(),
            error,
            message,
        })
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, CliError> {
        self.send(self.client.get(self.url(path)))
    }
}

impl Backend {
    pub fn create_project(&self, id: &ProjectId) -> Result<StoredProject, CliError> {
        match self {
            Backend::Local(s) => Ok(s.create_project(id.clone())?),
            Backend::Remote(r) => r.send(
                r.client
                    .post(r.url("/data/projects"))
                    .json(&json!({ "project_id": id })),
            ),
        }
    }

    pub fn put_baseline(
        &self,
        id: &ProjectId,
        baseline: Baseline,
        rebaseline: bool,
    ) -> Result<BaselineReceipt, CliError> {
        match self {
            Backend::Local(s) => Ok(s.put_baseline(id, baseline, None, rebaseline)?),
            Backend::Remote(r) => r.send(
                r.client
                    .put(r.url(&format!(
                        "/data/projects/{id}/baseline?rebaseline={rebaseline}"
                    )))
                    .json(&baseline),
            ),
        }
    }

    pub fn record_snapshot(
        &self,
        id: &ProjectId,
        snapshot: ProgressSnapshot,
    ) -> Result<SnapshotReceipt, CliError> {
        match self {
            Backend::Local(s) => Ok(s.record_snapshot(id, snapshot, None)?),
            Backend::Remote(r) => r.send(
                r.client
                    .post(r.url(&format!("/data/projects/{id}/snapshots")))
                    .json(&snapshot),
            ),
        }
    }

    pub fn indicators(&self, id: &ProjectId) -> Result<IndicatorReport, CliError> {
        match self {
            Backend::Local(s) => Ok(s.indicators(id)?),
            Backend::Remote(r) => r.get(&format!("/action/indicators/{id}")),
        }
    }

    pub fn s_curve_rows(&self, id: &ProjectId) -> Result<Vec<SCurveRow>, CliError> {
        match self {
            Backend::Local(s) => Ok(s.s_curve_rows(id)?),
            Backend::Remote(r) => {
                let baseline: Baseline = r.get(&format!("/data/projects/{id}/baseline"))?;
                let snapshots: Vec<ProgressSnapshot> =
                    r.get(&format!("/data/projects/{id}/snapshots"))?;
                Ok(s_curve_rows(&baseline, &snapshots)?)
            }
        }
    }

    pub fn lifecycle(&self, id: &ProjectId) -> Result<LifecycleView, CliError> {
        match self {
            Backend::Local(s) => Ok(s.lifecycle(id)?),
            Backend::Remote(r) => r.get(&format!("/lifecycle/{id}")),
        }
    }

    pub fn apply_event(
        &self,
        id: &ProjectId,
        role: Role,
        request: EventRequest,
    ) -> Result<LifecycleView, CliError> {
        match self {
            Backend::Local(s) => Ok(s.apply_event(id, Some(role), request, None)?),
            Backend::Remote(r) => r.send(
                r.client
                    .post(r.url(&format!("/lifecycle/{id}/events")))
                    .header(pmdss_service::http::ROLE_HEADER, role.as_str())
                    .json(&request),
            ),
        }
    }
}
