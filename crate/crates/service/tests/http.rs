use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use vizsynth_core::compile::render_json;
use vizsynth_service::{router, ServiceConfig, NDJSON, VERSION};

fn data(name: &str) -> String {
    let path = format!("{}/../../testdata/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture exists")
}

fn app() -> Router {
    router(&ServiceConfig::default())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, body.to_vec())
}

async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn post_stream(app: &Router, body: &Value) -> Vec<Value> {
    let req = Request::post("/api/synthesize?stream=true")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], NDJSON);
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    assert!(text.ends_with('\n'));
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn fig2_request() -> Value {
    json!({
        "table": data("fig1.csv"),
        "elements": [{"kind": "bar", "props": {"x": "09-05", "y": 64.4, "y2": 87.8}}],
        "config": {"worker_budgets_ms": [null]}
    })
}

fn line_request() -> Value {
    json!({
        "table": data("temps.csv"),
        "elements": [{"kind": "line", "props": {
            "x1": "2011-10-01", "y1": 63.4, "x2": "2011-10-05", "y2": 64.2, "color": "New York"
        }}],
        "config": {"worker_budgets_ms": [null]}
    })
}

fn ids(resp: &Value) -> Vec<String> {
    resp["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn health_reports_version() {
    let (status, body) = send(&app(), Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, json!({"status": "ok", "version": VERSION}));
    assert_eq!(VERSION, env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn fig2_first_candidate_matches_golden() {
    let (status, resp) = post(&app(), "/api/synthesize", &fig2_request()).await;
    assert_eq!(status, StatusCode::OK);
    let first = &resp["candidates"][0];
    assert_eq!(render_json(&first["vegalite"]), data("golden/fig2.vl.json"));
    assert_eq!(first["programs"], json!(["pivot_wider(names_from = Type, values_from = Temp)"]));
    assert_eq!(first["complexity"], 1);
    assert!(resp.get("reason").is_none());
    let stats = &resp["stats"];
    assert_eq!(stats["elapsed_ms"].as_array().unwrap().len(), 1);
    assert_eq!(stats["truncated"], false);
    assert!(stats["sketches_explored"].as_u64().unwrap() > 0);
    assert!(stats["pruned_count"].is_u64());
}

#[tokio::test]
async fn table_may_be_json() {
    let mut req = fig2_request();
    req["table"] = json!({
        "columns": [{"name": "Date"}, {"name": "Temp"}, {"name": "Type"}],
        "rows": [["09-05", 64.4, "Low"], ["09-05", 87.8, "High"], ["09-06", 53.6, "Low"], ["09-06", 80.6, "High"]]
    });
    let (status, resp) = post(&app(), "/api/synthesize", &req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(render_json(&resp["candidates"][0]["vegalite"]), data("golden/fig2.vl.json"));
}

#[tokio::test]
async fn line_example_generalizes_to_both_cities() {
    let (status, resp) = post(&app(), "/api/synthesize", &line_request()).await;
    assert_eq!(status, StatusCode::OK);
    let cands = resp["candidates"].as_array().unwrap();
    assert!(cands.len() >= 2);
    let both = cands.iter().any(|c| {
        c["programs"][0]
            .as_str()
            .unwrap()
            .starts_with("pivot_longer(cols = c(`New York`, `San Francisco`)")
    });
    assert!(both, "{resp:#}");
}

#[tokio::test]
async fn zero_elements_is_bad_request() {
    let req = json!({"table": data("fig1.csv"), "elements": []});
    let (status, resp) = post(&app(), "/api/synthesize", &req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "elements");
}

#[tokio::test]
async fn malformed_fields_report_their_path() {
    let cases = [
        (json!({"table": data("fig1.csv")}), "."),
        (
            json!({"table": data("fig1.csv"), "elements": [{"kind": "pie", "props": {}}]}),
            "elements[0].kind",
        ),
        (
            json!({"table": data("fig1.csv"), "elements": [{"kind": "bar", "props": {"x": "a"}}], "config": {"max_depth": "deep"}}),
            "config.max_depth",
        ),
        (json!({"table": 3, "elements": []}), "table"),
    ];
    for (body, path) in cases {
        let (status, resp) = post(&app(), "/api/synthesize", &body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(resp["path"], path, "{resp}");
        assert!(resp["error"].is_string());
    }

    let req = Request::post("/api/synthesize")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(send(&app(), req).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_elements_and_config_are_bad_requests() {
    let missing_y = json!({"table": data("fig1.csv"), "elements": [{"kind": "bar", "props": {"x": "09-05"}}]});
    let (status, resp) = post(&app(), "/api/synthesize", &missing_y).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "elements[0]");

    let mut bad_budgets = fig2_request();
    bad_budgets["config"] = json!({"worker_budgets_ms": [500, 100]});
    let (status, resp) = post(&app(), "/api/synthesize", &bad_budgets).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "config");

    let empty = json!({"table": "Date,Temp\n", "elements": fig2_request()["elements"]});
    let (status, resp) = post(&app(), "/api/synthesize", &empty).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "table");
}

#[tokio::test]
async fn decompiler_errors_are_unprocessable() {
    let req = json!({
        "table": data("fig1.csv"),
        "elements": [
            {"kind": "bar", "props": {"x": "09-05", "y": 64.4}},
            {"kind": "point", "props": {"x": "09-05", "y": 64.4}},
            {"kind": "area", "props": {"x": "09-05", "y": 64.4}},
            {"kind": "rect", "props": {"x": "09-05", "x2": "09-06", "y": 64.4, "y2": 87.8}}
        ]
    });
    let (status, resp) = post(&app(), "/api/synthesize", &req).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(resp["error"].as_str().unwrap().contains("layers"), "{resp}");
}

#[tokio::test]
async fn nothing_found_is_ok_with_reason() {
    let req = json!({
        "table": data("fig1.csv"),
        "elements": [{"kind": "bar", "props": {"x": "zzz", "y": 999}}],
        "config": {"max_depth": 1, "worker_budgets_ms": [null]}
    });
    let (status, resp) = post(&app(), "/api/synthesize", &req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["candidates"], json!([]));
    assert_eq!(resp["reason"], "NoCandidate");
}

#[tokio::test]
async fn streaming_ends_with_the_final_ranking() {
    let mut req = fig2_request();
    req["config"] = json!({"worker_budgets_ms": [null, null]});
    let events = post_stream(&app(), &req).await;
    let (done, cands) = events.split_last().unwrap();
    assert_eq!(done["type"], "done");
    assert!(cands.iter().all(|e| e["type"] == "candidate"));
    assert!(!cands.is_empty());

    // fast-worker candidates come first, each candidate is sent once
    let stages: Vec<&str> = cands.iter().map(|e| e["stage"].as_str().unwrap()).collect();
    assert!(stages.windows(2).all(|w| !(w[0] == "final" && w[1] == "fast")));
    let mut sent: Vec<&str> = cands.iter().map(|e| e["candidate"]["id"].as_str().unwrap()).collect();
    let order: Vec<&str> = done["order"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    sent.sort();
    let mut sorted_order = order.clone();
    sorted_order.sort();
    assert_eq!(sent, sorted_order);

    // the unstreamed ranking appears in the same order within the streamed one
    let (_, plain) = post(&app(), "/api/synthesize", &req).await;
    let plain = ids(&plain);
    let mut it = order.iter();
    assert!(plain.iter().all(|id| it.any(|o| o == id)), "{plain:?} vs {order:?}");
    assert_eq!(order[0], plain[0]);
}

#[tokio::test]
async fn single_worker_stream_and_accept_header() {
    let req = Request::post("/api/synthesize")
        .header(header::CONTENT_TYPE, "application/json")
        .header(header::ACCEPT, NDJSON)
        .body(Body::from(fig2_request().to_string()))
        .unwrap();
    let (status, body) = send(&app(), req).await;
    assert_eq!(status, StatusCode::OK);
    let events: Vec<Value> = String::from_utf8(body)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (done, cands) = events.split_last().unwrap();
    assert_eq!(done["type"], "done");
    assert!(cands.iter().all(|e| e["stage"] == "final"));
    let (_, plain) = post(&app(), "/api/synthesize", &fig2_request()).await;
    let order: Vec<String> = serde_json::from_value(done["order"].clone()).unwrap();
    assert_eq!(order, ids(&plain));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_identical_requests_agree() {
    let app = app();
    let req = fig2_request();
    let (a, b) = tokio::join!(
        post(&app, "/api/synthesize", &req),
        post(&app, "/api/synthesize", &req)
    );
    assert_eq!(a.0, StatusCode::OK);
    assert_eq!(a.1["candidates"], b.1["candidates"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_answers_while_synthesizing() {
    let app = app();
    let busy = {
        let app = app.clone();
        tokio::spawn(async move { post(&app, "/api/synthesize", &line_request()).await })
    };
    tokio::time::sleep(Duration::from_millis(50)).await;
    let started = Instant::now();
    let (status, _) = send(&app, Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(started.elapsed() < Duration::from_secs(1));
    assert_eq!(busy.await.unwrap().0, StatusCode::OK);
}

#[tokio::test]
async fn responds_within_budget_plus_overhead() {
    let mut req = line_request();
    req["config"] = json!({"worker_budgets_ms": [200, 500]});
    let started = Instant::now();
    let (status, resp) = post(&app(), "/api/synthesize", &req).await;
    let elapsed = started.elapsed();
    assert_eq!(status, StatusCode::OK);
    assert!(elapsed < Duration::from_millis(2_500), "{elapsed:?}");
    assert_eq!(resp["stats"]["elapsed_ms"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn server_defaults_come_from_config() {
    let cfg = ServiceConfig::from_lookup(|k| match k {
        "SYNTH_MAX_CANDIDATES" => Some("1".into()),
        "SYNTH_BUDGETS_MS" => Some("inf".into()),
        _ => None,
    })
    .unwrap();
    let mut req = fig2_request();
    req.as_object_mut().unwrap().remove("config");
    let (status, resp) = post(&router(&cfg), "/api/synthesize", &req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["candidates"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn transform_applies_a_program() {
    let req = json!({"table": data("temps.csv"), "program": "mutate(Diff = `New York` - `San Francisco`)"});
    let (status, table) = post(&app(), "/api/transform", &req).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = table["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Date", "New York", "San Francisco", "Diff"]);
    let diff = table["rows"][0][3].as_f64().unwrap();
    assert!((diff - 0.7).abs() < 1e-9, "{diff}");
}

#[tokio::test]
async fn transform_identity_echoes_the_table() {
    let input = json!({
        "columns": [{"name": "a", "type": "quantitative"}, {"name": "b", "type": "nominal"}],
        "rows": [[1, "x"], [2, "y"]]
    });
    let (status, table) = post(&app(), "/api/transform", &json!({"table": input, "program": "identity()"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(table, input);
}

#[tokio::test]
async fn transform_errors() {
    let missing = json!({"table": data("temps.csv"), "program": "filter(Nope > 1)"});
    let (status, resp) = post(&app(), "/api/transform", &missing).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(resp["index"], 0);

    let second = json!({"table": data("temps.csv"), "program": "select(Date) %>% filter(`New York` > 60)"});
    let (status, resp) = post(&app(), "/api/transform", &second).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(resp["index"], 1, "{resp}");

    let unparsable = json!({"table": data("temps.csv"), "program": "mutate(Diff = "});
    let (status, resp) = post(&app(), "/api/transform", &unparsable).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "program");
    assert!(resp["pos"].is_u64());

    let (status, resp) = post(&app(), "/api/transform", &json!({"table": data("temps.csv")})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(resp["error"].as_str().unwrap().contains("program"));
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let cfg = ServiceConfig {
        cors_origin: Some("http://localhost:5173".into()),
        ..ServiceConfig::default()
    };
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/synthesize")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = router(&cfg).oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://localhost:5173"
    );
    let req = Request::get("/api/health")
        .header(header::ORIGIN, "http://elsewhere.test")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test]
async fn oversized_bodies_are_rejected() {
    let big = "x".repeat(vizsynth_service::MAX_BODY_BYTES + 1);
    let req = Request::post("/api/transform")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(big))
        .unwrap();
    assert_eq!(send(&app(), req).await.0, StatusCode::PAYLOAD_TOO_LARGE);
}
