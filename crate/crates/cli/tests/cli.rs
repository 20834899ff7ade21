use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, Request};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use vizsynth_core::compile::render_json;
use vizsynth_core::load_csv;
use vizsynth_service::{router, ServiceConfig};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata").join(name)
}

fn vizsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vizsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Writes a task next to a copy of the named data file.
fn task(dir: &Path, table: &str, elements: Value, config: Option<Value>) -> PathBuf {
    std::fs::copy(data(table), dir.join(table)).unwrap();
    let mut t = json!({"input": table, "elements": elements});
    if let Some(c) = config {
        t["config"] = c;
    }
    let path = dir.join("task.json");
    std::fs::write(&path, t.to_string()).unwrap();
    path
}

fn fig2_elements() -> Value {
    json!([{"kind": "bar", "props": {"x": "09-05", "y": 64.4, "y2": 87.8}}])
}

fn synth(task: &Path, out: &Path, flags: &[&str]) -> Output {
    let mut args = vec!["synth", task.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(flags);
    vizsynth(&args)
}

#[test]
fn synth_fig2_matches_golden() {
    let dir = TempDir::new().unwrap();
    let t = task(dir.path(), "fig1.csv", fig2_elements(), None);
    let out = dir.path().join("out");
    let run = synth(&t, &out, &["--seedless"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let golden = std::fs::read_to_string(data("golden/fig2.vl.json")).unwrap();
    assert_eq!(std::fs::read_to_string(out.join("candidate_1.vl.json")).unwrap(), golden);

    let programs = std::fs::read_to_string(out.join("programs.txt")).unwrap();
    let lines: Vec<&str> = programs.lines().collect();
    assert_eq!(lines[0], "pivot_wider(names_from = Type, values_from = Temp)");
    for k in 1..=lines.len() {
        assert!(out.join(format!("candidate_{k}.vl.json")).exists());
    }
    assert!(!out.join(format!("candidate_{}.vl.json", lines.len() + 1)).exists());

    let stats: Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["candidates"], lines.len());
    assert_eq!(stats["stats"]["elapsed_ms"].as_array().unwrap().len(), 1);
}

#[test]
fn unsatisfiable_task_exits_3() {
    let dir = TempDir::new().unwrap();
    let elements = json!([{"kind": "bar", "props": {"x": "zzz", "y": 999}}]);
    let t = task(dir.path(), "fig1.csv", elements, Some(json!({"max_depth": 1})));
    let out = dir.path().join("out");
    let run = synth(&t, &out, &["--seedless"]);
    assert_eq!(code(&run), 3);
    assert_eq!(std::fs::read_to_string(out.join("programs.txt")).unwrap(), "");
    let stats: Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["reason"], "NoCandidate");
}

#[test]
fn depth_limit_can_make_a_task_unsatisfiable() {
    // the spread High - Low only exists after a pivot followed by a mutate
    let dir = TempDir::new().unwrap();
    let elements = json!([{"kind": "bar", "props": {"x": "09-05", "y": 64.4, "y2": 87.8, "color": 23.4}}]);
    let t = task(dir.path(), "fig1.csv", elements, None);

    let deep = synth(&t, &dir.path().join("deep"), &["--seedless", "--max-depth", "2"]);
    assert_eq!(code(&deep), 0, "{}", String::from_utf8_lossy(&deep.stderr));
    let programs = std::fs::read_to_string(dir.path().join("deep/programs.txt")).unwrap();
    assert!(
        programs
            .lines()
            .any(|l| l == "pivot_wider(names_from = Type, values_from = Temp) %>% mutate(Diff = High - Low)"),
        "{programs}"
    );

    let shallow = synth(&t, &dir.path().join("shallow"), &["--seedless", "--max-depth", "1"]);
    assert_eq!(code(&shallow), 3);
}

#[test]
fn synth_errors_have_distinct_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&synth(&dir.path().join("missing.json"), &out, &[])), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"input": "fig1.csv", "elements": [{"kind": "pie", "props": {}}]}"#).unwrap();
    let run = synth(&bad, &out, &[]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("elements[0].kind"));

    let t = task(dir.path(), "fig1.csv", json!([]), None);
    assert_eq!(code(&synth(&t, &out, &[])), 2);

    let t = task(dir.path(), "fig1.csv", fig2_elements(), None);
    assert_eq!(code(&synth(&t, &out, &["--budgets-ms", "500,100"])), 2);
    assert_eq!(code(&synth(&t, &out, &["--seedless", "--budgets-ms", "100"])), 2);

    std::fs::write(dir.path().join("task.json"), r#"{"input": "nope.csv", "elements": []}"#).unwrap();
    assert_eq!(code(&synth(&dir.path().join("task.json"), &out, &[])), 1);
}

#[test]
fn cli_and_service_emit_identical_json() {
    let dir = TempDir::new().unwrap();
    let t = task(dir.path(), "fig1.csv", fig2_elements(), Some(json!({"max_candidates": 5})));
    let out = dir.path().join("out");
    assert_eq!(code(&synth(&t, &out, &["--seedless"])), 0);

    let req = json!({
        "table": std::fs::read_to_string(data("fig1.csv")).unwrap(),
        "elements": fig2_elements(),
        "config": {"max_candidates": 5, "worker_budgets_ms": [null]}
    });
    let resp: Value = tokio::runtime::Runtime::new().unwrap().block_on(async {
        let resp = router(&ServiceConfig::default())
            .oneshot(
                Request::post("/api/synthesize")
                    .header(header::CONTENT_TYPE, "application/json")
                    .body(Body::from(req.to_string()))
                    .unwrap(),
            )
            .await
            .unwrap();
        serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap()
    });
    let cands = resp["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 5);
    let programs = std::fs::read_to_string(out.join("programs.txt")).unwrap();
    for (k, (c, line)) in cands.iter().zip(programs.lines()).enumerate() {
        let file = std::fs::read_to_string(out.join(format!("candidate_{}.vl.json", k + 1))).unwrap();
        assert_eq!(render_json(&c["vegalite"]), file);
        let texts: Vec<&str> = c["programs"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
        assert_eq!(texts.join("\t"), line);
    }
}

#[test]
fn eval_program_prints_csv() {
    let input = data("temps.csv");
    let run = vizsynth(&[
        "eval-program",
        "--input",
        input.to_str().unwrap(),
        "--program",
        "mutate(Diff = `New York` - `San Francisco`)",
    ]);
    assert_eq!(code(&run), 0);
    let out = load_csv(&run.stdout, true).unwrap();
    let diff = out.column_index("Diff").unwrap();
    assert!((out.cell(0, diff).as_number().unwrap() - 0.7).abs() < 1e-9);
    assert!(String::from_utf8_lossy(&run.stdout).contains("0.7"));

    let run = vizsynth(&["eval-program", "--input", input.to_str().unwrap(), "--program", "identity()"]);
    assert_eq!(code(&run), 0);
    let original = load_csv(&std::fs::read(&input).unwrap(), true).unwrap();
    assert_eq!(load_csv(&run.stdout, true).unwrap(), original);
}

#[test]
fn eval_program_errors() {
    let input = data("temps.csv");
    let input = input.to_str().unwrap();
    let run = vizsynth(&["eval-program", "--input", input, "--program", "select(Nope)"]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("operator 0"));
    assert_eq!(code(&vizsynth(&["eval-program", "--input", input, "--program", "select("])), 2);
    assert_eq!(code(&vizsynth(&["eval-program", "--input", "/no/such.csv", "--program", "identity()"])), 1);
}

#[test]
fn decompile_prints_sketches() {
    let bar = r#"[{"kind": "bar", "props": {"x": "2011-10-01", "y": 62.7, "y2": 63.4, "color": 0.7}}]"#;
    let run = vizsynth(&["decompile", "--elements", bar]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let v: Value = serde_json::from_slice(&run.stdout).unwrap();
    let table = &v[0]["example_table"];
    assert_eq!(table["rows"].as_array().unwrap().len(), 1);
    assert_eq!(table["columns"].as_array().unwrap().len(), 4);
    assert_eq!(v[0]["layer"]["mark"], "bar");

    let line = r#"[{"kind": "line", "props": {"x1": "2011-10-01", "y1": 63.4, "x2": "2011-10-05", "y2": 64.2, "color": "New York"}}]"#;
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("line.json");
    std::fs::write(&path, line).unwrap();
    let run = vizsynth(&["decompile", "--elements", path.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let v: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v[0]["example_table"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v[0]["example_table"]["columns"].as_array().unwrap().len(), 3);

    assert_eq!(code(&vizsynth(&["decompile", "--elements", "[]"])), 2);
    assert_eq!(code(&vizsynth(&["decompile", "--elements", "/no/such.json"])), 1);
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut resp = String::new();
    s.read_to_string(&mut resp).ok()?;
    Some(resp)
}

#[test]
fn serve_answers_health_checks() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_vizsynth"))
        .args(["serve", "--port", &port.to_string()])
        .env("SYNTH_MAX_DEPTH", "2")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    let resp = loop {
        if let Some(r) = http_get(port, "/api/health") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains(r#""status":"ok""#), "{resp}");
}
