use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use csaudit::dataio::{load_contests, synthetic_manifest};
use csaudit::engine::{AuditSession, Mode, OverallStatus, SessionConfig, StrategyKind};
use csaudit::service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

fn sample_app() -> Router {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/contests_sample.csv");
    let contests = load_contests(path).unwrap().contests;
    router(Arc::new(AppState::new(contests)), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8(bytes).unwrap()))
    };
    (status, value)
}

async fn call_raw(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn create(app: &Router, body: Value) -> (StatusCode, Value) {
    call(app, "POST", "/sessions", Some(body.to_string())).await
}

async fn post_vote(
    app: &Router,
    id: &str,
    ballot: &str,
    vote: &str,
    revision: Option<u64>,
) -> (StatusCode, Value) {
    let mut body = json!({ "ballot_id": ballot, "vote": vote });
    if let Some(r) = revision {
        body["revision"] = json!(r);
    }
    call(
        app,
        "POST",
        &format!("/sessions/{id}/ballots"),
        Some(body.to_string()),
    )
    .await
}

fn duel_session(seed: u64) -> Value {
    json!({ "contest_id": "alice-bob", "alpha": 0.05, "strategy": "sqkelly", "seed": seed })
}

#[tokio::test]
async fn contests_are_listed_and_fetched() {
    let app = sample_app();
    let (status, body) = call(&app, "GET", "/contests", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["contests"].as_array().unwrap().len(), 3);
    let (status, body) = call(&app, "GET", "/contests/waterloo", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["candidates"].as_array().unwrap().len(), 7);
    let (status, _) = call(&app, "GET", "/contests/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_contest_upload_names_the_line() {
    let app = sample_app();
    let csv = "contest_id,district,candidate,party,votes,total_ballots\n\
               x,D,A,P,10,30\n\
               x,D,B,Q,-3,30\n";
    let (status, body) = call(&app, "POST", "/contests", Some(csv.into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["line"], 3);
    let good = "contest_id,district,candidate,party,votes,total_ballots\n\
                y,D,A,P,10,30\n\
                y,D,B,Q,12,30\n";
    let (status, body) = call(&app, "POST", "/contests", Some(good.into())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["added"], json!(["y"]));
}

#[tokio::test]
async fn session_creation_validates_parameters() {
    let app = sample_app();
    let (status, body) = create(&app, duel_session(1)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["revision"], 1);
    assert_eq!(body["rows"].as_array().unwrap().len(), 1);
    assert!(body["next_ballot"].is_string());

    let bad_alpha =
        json!({ "contest_id": "alice-bob", "alpha": 0.0, "strategy": "sqkelly", "seed": 1 });
    assert_eq!(
        create(&app, bad_alpha).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let bad_strategy =
        json!({ "contest_id": "alice-bob", "alpha": 0.05, "strategy": "nope", "seed": 1 });
    let (status, body) = create(&app, bad_strategy).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("linkelly"));
    let tally_apk = json!({ "contest_id": "alice-bob", "alpha": 0.05, "strategy": "apk", "mode": "rlt", "seed": 1 });
    assert_eq!(
        create(&app, tally_apk).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let unknown =
        json!({ "contest_id": "nowhere", "alpha": 0.05, "strategy": "sqkelly", "seed": 1 });
    assert_eq!(create(&app, unknown).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn apk_without_reported_totals_is_unprocessable() {
    let app = sample_app();
    let csv = "contest_id,district,candidate,party,votes,total_ballots\n\
               blind,D,A,P,,30\n\
               blind,D,B,Q,,30\n";
    let (status, _) = call(&app, "POST", "/contests", Some(csv.into())).await;
    assert_eq!(status, StatusCode::CREATED);
    let apk = json!({ "contest_id": "blind", "alpha": 0.05, "strategy": "apk", "seed": 1 });
    assert_eq!(create(&app, apk).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let sq = json!({ "contest_id": "blind", "alpha": 0.05, "strategy": "sqkelly", "winners": ["A"], "seed": 1 });
    assert_eq!(create(&app, sq).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn same_seed_draws_the_same_first_ballot() {
    let app = sample_app();
    let a = create(&app, duel_session(42)).await.1;
    let b = create(&app, duel_session(42)).await.1;
    let c = create(&app, duel_session(43)).await.1;
    assert_eq!(a["next_ballot"], b["next_ballot"]);
    assert_ne!(a["session_id"], b["session_id"]);
    assert_ne!(a["next_ballot"], c["next_ballot"]);
}

#[tokio::test]
async fn ballot_posts_update_bounds_and_reject_bad_input() {
    let app = sample_app();
    let s = create(&app, duel_session(5)).await.1;
    let id = s["session_id"].as_str().unwrap();
    let ballot = s["next_ballot"].as_str().unwrap().to_string();

    let (status, body) = post_vote(&app, id, &ballot, "Carol", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["valid_votes"], json!(["Alice", "Bob", "invalid"]));

    let (status, _) = post_vote(&app, id, "not-the-pending-one", "Alice", None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = post_vote(&app, id, &ballot, "Alice", Some(1)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["revision"], 2);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["t"], 1);
    assert!(rows[0]["lower"].as_f64().unwrap() > 0.0);

    // A second post against the old revision changes nothing.
    let next = body["next_ballot"].as_str().unwrap().to_string();
    let (status, body) = post_vote(&app, id, &next, "Alice", Some(1)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["revision"], 2);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["revision"], 2);
    assert_eq!(state["next_ballot"], json!(next));
    assert_eq!(state["status"]["ballots_recorded"], 1);

    let (status, _) = post_vote(&app, id, &ballot, "Alice", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn state_deltas_concatenate_to_the_full_trajectory() {
    let app = sample_app();
    let s = create(&app, duel_session(9)).await.1;
    let id = s["session_id"].as_str().unwrap().to_string();
    let mut collected: Vec<Value> = s["rows"].as_array().unwrap().clone();
    let mut next = s["next_ballot"].as_str().unwrap().to_string();
    let mut revision = 1;
    for i in 0..12 {
        let vote = if i % 3 == 2 { "Bob" } else { "Alice" };
        let body = post_vote(&app, &id, &next, vote, None).await.1;
        next = body["next_ballot"].as_str().unwrap().to_string();
        if i % 4 == 3 {
            let uri = format!("/sessions/{id}/state?since_revision={revision}");
            let (_, delta) = call(&app, "GET", &uri, None).await;
            collected.extend(delta["rows"].as_array().unwrap().iter().cloned());
            revision = delta["revision"].as_u64().unwrap();
        }
    }
    let (_, full) = call(
        &app,
        "GET",
        &format!("/sessions/{id}/state?since_revision=0"),
        None,
    )
    .await;
    assert_eq!(&collected, full["rows"].as_array().unwrap());
    assert_eq!(collected.len(), 13);

    let (_, current) = call(
        &app,
        "GET",
        &format!("/sessions/{id}/state?since_revision={revision}&wait_ms=50"),
        None,
    )
    .await;
    assert!(current["rows"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn long_poll_returns_when_a_ballot_arrives() {
    let app = sample_app();
    let s = create(&app, duel_session(2)).await.1;
    let id = s["session_id"].as_str().unwrap().to_string();
    let ballot = s["next_ballot"].as_str().unwrap().to_string();
    let waiter = {
        let app = app.clone();
        let id = id.clone();
        tokio::spawn(async move {
            call(
                &app,
                "GET",
                &format!("/sessions/{id}/state?since_revision=1&wait_ms=5000"),
                None,
            )
            .await
        })
    };
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    post_vote(&app, &id, &ballot, "Bob", None).await;
    let (status, body) = waiter.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["revision"], 2);
    assert_eq!(body["rows"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn api_and_engine_agree_on_certification() {
    let app = sample_app();
    let contest = load_contests(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/contests_sample.csv"
    ))
    .unwrap()
    .contests
    .into_iter()
    .find(|c| c.contest_id == "close-call")
    .unwrap();
    let manifest = synthetic_manifest(&contest).unwrap();
    let votes = manifest.votes();
    for seed in [3, 4] {
        let config = SessionConfig::new(0.1, StrategyKind::Linkelly, Mode::Rla, seed);
        let mut engine = AuditSession::create(contest.clone(), config).unwrap();
        while engine.status().overall == OverallStatus::Open {
            let id = engine.draw_next().unwrap();
            engine.record_ballot(&id, votes[id.as_str()]).unwrap();
        }

        let body = json!({ "contest_id": "close-call", "alpha": 0.1, "strategy": "linkelly", "seed": seed });
        let mut view = create(&app, body).await.1;
        let id = view["session_id"].as_str().unwrap().to_string();
        while view["status"]["overall"] == "open" {
            let ballot = view["next_ballot"].as_str().unwrap().to_string();
            view = post_vote(&app, &id, &ballot, votes[ballot.as_str()], None)
                .await
                .1;
        }
        assert_eq!(
            view["status"]["certified_at"],
            json!(engine.status().certified_at)
        );
        let (status, csv) = call_raw(&app, "GET", &format!("/sessions/{id}/export"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            csaudit::dataio::export_trajectories(&engine)
        );
    }
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/contests_sample.csv");
    let contests = load_contests(path).unwrap().contests;
    let app = router(
        Arc::new(AppState::with_data_dir(contests, dir.path()).unwrap()),
        None,
    );
    let s = create(&app, duel_session(11)).await.1;
    let id = s["session_id"].as_str().unwrap().to_string();
    let mut next = s["next_ballot"].as_str().unwrap().to_string();
    for _ in 0..5 {
        next = post_vote(&app, &id, &next, "Alice", None).await.1["next_ballot"]
            .as_str()
            .unwrap()
            .to_string();
    }
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    drop(app);

    let app = router(
        Arc::new(AppState::with_data_dir(Vec::new(), dir.path()).unwrap()),
        None,
    );
    let (_, contests) = call(&app, "GET", "/contests", None).await;
    assert_eq!(contests["contests"].as_array().unwrap().len(), 3);
    let (status, after) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);
    let (status, _) = post_vote(&app, &id, &next, "Alice", Some(6)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let app = router(
        Arc::new(AppState::new(Vec::new())),
        Some("http://localhost:5173"),
    );
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:5173"
    );
}
