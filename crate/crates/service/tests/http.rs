use std::net::SocketAddr;
use std::time::Duration;

use pmdss_core::testkit::{desk_baseline, desk_snapshots};
use pmdss_service::{ErrorBody, FeedEvent, FeedKind, IndicatorReport, ServiceConfig, ROUTES};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Server {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
    client: Client,
}

impl Server {
    async fn start(data_dir: &std::path::Path) -> Self {
        let mut config = ServiceConfig::with_data_dir(data_dir);
        config.listen = "127.0.0.1:0".parse().unwrap();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let (addr_tx, addr_rx) = oneshot::channel::<SocketAddr>();
        let task = tokio::spawn(async move {
            pmdss_service::serve(
                &config,
                async {
                    let _ = stop_rx.await;
                },
                |addr| {
                    let _ = addr_tx.send(addr);
                },
            )
            .await
            .unwrap();
        });
        let addr = addr_rx.await.unwrap();
        Server {
            base: format!("http://{addr}"),
            stop: Some(stop_tx),
            task,
            client: Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).send().await.unwrap()
    }

    async fn event(&self, id: &str, role: &str, body: Value) -> reqwest::Response {
        self.client
            .post(self.url(&format!("/lifecycle/{id}/events")))
            .header("x-role", role)
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap();
    }
}

async fn error_of(resp: reqwest::Response) -> (StatusCode, String) {
    let status = resp.status();
    let body: ErrorBody = resp.json().await.unwrap();
    (status, body.error)
}

/// Walks a fresh project to the implementation phase.
async fn to_implementation(s: &Server, id: &str) {
    let steps = [
        (
            "business-engineer",
            json!({"kind": "opportunity_qualified", "at": 0}),
        ),
        ("before-sale-engineer", json!({"kind": "proposal_ready"})),
        (
            "business-manager",
            json!({"kind": "decision", "gate": "bid_no_bid", "outcome": "go"}),
        ),
        (
            "business-manager",
            json!({"kind": "decision", "gate": "win_loss", "outcome": "go"}),
        ),
        ("customer", json!({"kind": "contract_signed"})),
        ("project-manager", json!({"kind": "plan_established"})),
    ];
    for (role, body) in steps {
        let resp = s.event(id, role, body.clone()).await;
        assert_eq!(
            resp.status(),
            StatusCode::OK,
            "{body}: {}",
            resp.text().await.unwrap()
        );
    }
}

async fn create(s: &Server, id: &str) {
    let resp = s
        .client
        .post(s.url("/data/projects"))
        .json(&json!({ "project_id": id }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
}

#[tokio::test]
async fn desk_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    assert_eq!(s.get("/health").await.status(), StatusCode::OK);

    create(&s, "desk").await;
    let resp = s
        .client
        .post(s.url("/data/projects"))
        .json(&json!({"project_id": "desk"}))
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::CONFLICT, "already_exists".into())
    );

    let resp = s.get("/action/indicators/desk").await;
    assert_eq!(
        error_of(resp).await,
        (StatusCode::NOT_FOUND, "no_baseline".into())
    );

    let resp = s
        .client
        .put(s.url("/data/projects/desk/baseline"))
        .json(&desk_baseline("desk"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let receipt: Value = resp.json().await.unwrap();
    assert_eq!(receipt["tasks"], 10);
    assert_eq!(receipt["bac"], "55000");

    let snapshots = desk_snapshots("desk");
    let resp = s
        .client
        .post(s.url("/data/projects/desk/snapshots"))
        .json(&snapshots[0])
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::CONFLICT, "phase_violation".into())
    );

    to_implementation(&s, "desk").await;
    for snap in &snapshots {
        let resp = s
            .client
            .post(s.url("/data/projects/desk/snapshots"))
            .json(snap)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
    }
    let resp = s
        .client
        .post(s.url("/data/projects/desk/snapshots"))
        .json(&snapshots[0])
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::BAD_REQUEST, "validation_failed".into())
    );

    let report: IndicatorReport = s.get("/action/indicators/desk").await.json().await.unwrap();
    let latest = snapshots.last().unwrap();
    let expected = pmdss_core::evm::compute_metrics(
        &desk_baseline("desk"),
        latest,
        report.metrics.policy,
        None,
    )
    .unwrap();
    assert_eq!(report.metrics, expected);
    assert_eq!(report.s_curve.ev.len(), snapshots.len());

    let indices: Value = s
        .get("/data/indices/desk?status_date=7")
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(indices["snapshot_date"], 6);

    let model: Value = s
        .get("/technique/models/desk/eac?variant=new_estimate&new_etc=100")
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(model["variant"], "new_estimate");
    let resp = s
        .get("/technique/models/desk/eac?variant=new_estimate")
        .await;
    assert_eq!(
        error_of(resp).await,
        (StatusCode::UNPROCESSABLE_ENTITY, "missing_estimate".into())
    );
    let resp = s.get("/technique/models/desk/eac?variant=guess").await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let snap: Value = s
        .get("/data/projects/desk/snapshots/6")
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(snap["status_date"], 6);
    let resp = s
        .client
        .delete(s.url("/data/projects/desk/snapshots/6"))
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed".into())
    );
    assert_eq!(
        s.get("/data/projects/desk/snapshots/7").await.status(),
        StatusCode::NOT_FOUND
    );

    s.stop().await;
}

#[tokio::test]
async fn roles_revisions_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    create(&s, "p").await;

    let body = json!({"kind": "opportunity_qualified", "at": 1});
    let resp = s
        .client
        .post(s.url("/lifecycle/p/events"))
        .json(&body)
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::UNAUTHORIZED, "unauthorized".into())
    );
    let resp = s.event("p", "customer", body.clone()).await;
    assert_eq!(
        error_of(resp).await,
        (StatusCode::FORBIDDEN, "unauthorized".into())
    );
    let resp = s
        .event(
            "p",
            "business-manager",
            json!({"kind": "decision", "gate": "win_loss", "outcome": "go"}),
        )
        .await;
    assert_eq!(
        error_of(resp).await,
        (StatusCode::CONFLICT, "illegal_transition".into())
    );
    let view: Value = s
        .event("p", "business-engineer", body)
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(view["phase"], "proposal_preparation");
    assert_eq!(view["revision"], 2);

    let lifecycle: Value = s.get("/lifecycle/p").await.json().await.unwrap();
    assert_eq!(lifecycle["phase"], "proposal_preparation");

    let resp = s
        .client
        .put(s.url("/data/projects/p/baseline"))
        .header("if-match", "1")
        .json(&desk_baseline("p"))
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (
            StatusCode::PRECONDITION_FAILED,
            "conflicting_revision".into()
        )
    );
    let resp = s
        .client
        .put(s.url("/data/projects/p/baseline"))
        .header("if-match", "\"2\"")
        .json(&desk_baseline("p"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);

    let resp = s
        .client
        .put(s.url("/data/projects/p/baseline"))
        .header("content-type", "application/json")
        .body("{\"project_id\": \"p\",\n \"tasks\": 5}")
        .send()
        .await
        .unwrap();
    let status = resp.status();
    let body: ErrorBody = resp.json().await.unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.message.contains("line 2"), "{}", body.message);

    let resp = s
        .client
        .put(s.url("/data/projects/p/baseline"))
        .json(&json!({"project_id": "p", "tasks": [
            {"task_id": "a", "budget": "100", "curve": [{"t": 5, "cumulative": "0"}, {"t": 1, "cumulative": "100"}]}
        ]}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    assert_eq!(
        s.get("/data/projects/missing").await.status(),
        StatusCode::NOT_FOUND
    );
    let resp = s
        .client
        .post(s.url("/data/projects"))
        .json(&json!({"project_id": "../x"}))
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_of(resp).await,
        (StatusCode::BAD_REQUEST, "validation_failed".into())
    );
    let list: Vec<String> = s.get("/data/projects").await.json().await.unwrap();
    assert_eq!(list, ["p"]);
    let resp = s
        .client
        .delete(s.url("/data/projects/p"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NO_CONTENT);
    assert_eq!(
        s.get("/data/projects/p").await.status(),
        StatusCode::NOT_FOUND
    );
    s.stop().await;
}

#[tokio::test]
async fn every_listed_route_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let listed: Value = s.get("/routes").await.json().await.unwrap();
    assert_eq!(listed, serde_json::to_value(ROUTES).unwrap());
    assert_eq!(listed[0]["layer"], "Data");
    for r in ROUTES {
        let path = r.path.replace("{id}", "nope").replace("{date}", "1");
        let method = reqwest::Method::from_bytes(r.method.as_bytes()).unwrap();
        let resp = s
            .client
            .request(method, s.url(&path))
            .json(&json!({}))
            .send()
            .await
            .unwrap();
        let status = resp.status();
        // unrouted paths come back 404 with an empty body; routed ones carry an error code
        if status.is_client_error() {
            let body: ErrorBody = resp
                .json()
                .await
                .unwrap_or_else(|_| panic!("{} {} is not routed", r.method, r.path));
            assert!(!body.error.is_empty());
        }
    }
    s.stop().await;
}

#[tokio::test]
async fn feed_poll_stream_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    create(&s, "f").await;
    let resp = s
        .client
        .put(s.url("/data/projects/f/baseline"))
        .json(&desk_baseline("f"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);

    let mut stream = s.get("/feed/f/stream?from=0").await;
    assert_eq!(stream.headers()["content-type"], "text/event-stream");

    s.event(
        "f",
        "business-engineer",
        json!({"kind": "opportunity_qualified", "at": 0}),
    )
    .await;
    s.event("f", "business-engineer", json!({"kind": "proposal_ready"}))
        .await;
    s.event(
        "f",
        "business-manager",
        json!({"kind": "decision", "gate": "bid_no_bid", "outcome": "go"}),
    )
    .await;

    let mut text = String::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while text.matches("id: ").count() < 4 {
        let chunk = tokio::time::timeout_at(deadline, stream.chunk())
            .await
            .expect("feed stalled")
            .unwrap()
            .unwrap();
        text.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    let ids: Vec<u64> = text
        .lines()
        .filter_map(|l| l.strip_prefix("id: "))
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(ids, [1, 2, 3, 4]);
    assert!(text.contains("event: decision_recorded"));
    drop(stream);

    let polled: Vec<FeedEvent> = s.get("/feed/f?from=2").await.json().await.unwrap();
    assert_eq!(
        polled.iter().map(|e| e.sequence).collect::<Vec<_>>(),
        [3, 4]
    );

    let resumed = s
        .client
        .get(s.url("/feed/f/stream"))
        .header("last-event-id", "3")
        .send()
        .await
        .unwrap();
    let chunk = tokio::time::timeout(Duration::from_secs(10), async {
        let mut resumed = resumed;
        let mut text = String::new();
        while !text.contains("\n\n") {
            text.push_str(std::str::from_utf8(&resumed.chunk().await.unwrap().unwrap()).unwrap());
        }
        text
    })
    .await
    .unwrap();
    assert!(chunk.contains("id: 4"), "{chunk}");

    let before: Value = s.get("/data/projects/f").await.json().await.unwrap();
    s.stop().await;

    let s = Server::start(dir.path()).await;
    let after: Value = s.get("/data/projects/f").await.json().await.unwrap();
    assert_eq!(before, after);
    let replay: Vec<FeedEvent> = s.get("/feed/f?from=0").await.json().await.unwrap();
    let kinds: Vec<FeedKind> = replay.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [
            FeedKind::BaselineSet,
            FeedKind::PhaseChanged,
            FeedKind::PhaseChanged,
            FeedKind::DecisionRecorded
        ]
    );
    s.stop().await;
}
