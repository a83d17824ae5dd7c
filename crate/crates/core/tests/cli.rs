use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::process::{Command, Stdio};

use perflab::loadgen::{Client, Connector, HttpConnector};

const EXE: &str = env!("CARGO_BIN_EXE_perflab");

struct Served(std::process::Child, SocketAddr);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(envs: &[(&str, &str)], args: &[&str]) -> Served {
    let mut child = Command::new(EXE)
        .args(["serve", "--port", "0", "--airports", "5", "--flights", "20", "--seats", "12", "--users", "1"])
        .args(args)
        .envs(envs.iter().copied())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().parse().unwrap();
    Served(child, addr)
}

fn get(addr: SocketAddr, path: &str) -> (u16, String, String) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        // Raw client so the request-id header is visible.
        let stream = tokio::net::TcpStream::connect(addr).await.unwrap();
        let (mut sender, conn) =
            hyper::client::conn::http1::handshake::<_, http_body_util::Empty<bytes::Bytes>>(hyper_util::rt::TokioIo::new(stream))
                .await
                .unwrap();
        tokio::spawn(conn);
        let req = http::Request::get(path).header("host", addr.to_string()).body(http_body_util::Empty::new()).unwrap();
        let resp = sender.send_request(req).await.unwrap();
        let status = resp.status().as_u16();
        let id = resp.headers()["x-request-id"].to_str().unwrap().to_string();
        let body = http_body_util::BodyExt::collect(resp.into_body()).await.unwrap().to_bytes();
        (status, id, String::from_utf8(body.to_vec()).unwrap())
    })
}

#[test]
fn serve_answers_http_with_request_ids() {
    let s = serve(&[], &[]);
    let (status, id, body) = get(s.1, "/destinations");
    assert_eq!(status, 200);
    assert_eq!(id, "1");
    assert_eq!(serde_json::from_str::<Vec<serde_json::Value>>(&body).unwrap().len(), 5);
    let (status, id, _) = get(s.1, "/flights/F00003/seats");
    assert_eq!((status, id.as_str()), (200, "2"));
    let (status, _, _) = get(s.1, "/missing");
    assert_eq!(status, 404);
}

#[test]
fn serve_reads_issue_from_environment() {
    let s = serve(&[("ISSUE_KIND", "request-id"), ("ISSUE_SEVERITY", "2")], &[]);
    let (status, id, _) = get(s.1, "/destinations");
    assert_eq!(status, 200);
    assert_eq!(id.len(), 40);
    assert!(id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
}

#[test]
fn loadgen_http_client_against_child_process() {
    let s = serve(&[], &["--issue", "clean-path", "--severity", "4"]);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let mut c = HttpConnector::new(s.1).client();
        for _ in 0..3 {
            let r = c.send(http::Request::get("/flights").body(Vec::new()).unwrap()).await.unwrap();
            assert_eq!(r.status, 200);
        }
    });
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(EXE).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn micro_analyze_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = run(&[
        "micro", "--issue", "request-id", "--severity", "2048", "--instance-runs", "1", "--suite-runs", "1",
        "--iterations", "2", "--budget", "0.01", "--bootstrap-iterations", "500", "--output-dir", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let reports: Vec<serde_json::Value> =
        stdout.lines().filter(|l| l.starts_with('{')).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 21);
    for r in &reports {
        for key in ["target", "r", "ciLo", "ciHi", "class", "n1", "n2"] {
            assert!(r.get(key).is_some(), "{key} missing in {r}");
        }
    }
    let dir = tmp.path().join("micro-request-id-s2048");
    assert!(dir.join("instances").join("instance-0.samples.jsonl").is_file());

    let a = run(&["analyze", dir.to_str().unwrap()]);
    assert!(a.status.success());
    let again: Vec<&str> = std::str::from_utf8(&a.stdout).unwrap().lines().filter(|l| l.starts_with('{')).collect();
    let before: Vec<&str> = stdout.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(again, before);

    let r = run(&["report", out]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("Issue: request-id"));
    assert!(text.contains("M1*") && text.contains("Legend:") && text.contains("RCIW"));
    assert!(tmp.path().join("rciw_summary.json").is_file());
}

#[test]
fn invalid_experiment_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["micro", "--issue", "none", "--severity", "1", "--output-dir", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let o = run(&["micro", "--issue", "basic-auth", "--severity", "3", "--output-dir", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let o = run(&["analyze", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
