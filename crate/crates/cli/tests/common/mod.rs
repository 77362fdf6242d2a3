#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

pub const BIN: &str = env!("CARGO_BIN_EXE_stgcn");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn ok(&self) -> &Self {
        assert_eq!(self.code, 0, "stdout:\n{}\nstderr:\n{}", self.stdout, self.stderr);
        self
    }
}

fn finish(out: Output) -> Run {
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Runs the binary with a scrubbed environment: no API key, no log filter.
pub fn stgcn<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    stgcn_env(args, &[])
}

pub fn stgcn_env<S: AsRef<std::ffi::OsStr>>(args: &[S], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("OPENAI_API_KEY").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    finish(cmd.output().expect("spawn stgcn"))
}

pub fn p(path: &Path) -> String {
    path.to_str().expect("utf-8 path").to_string()
}

/// Local stand-in for the embedding service. Each text maps to
/// `[len, first byte / 100, -0.5]`; `fail_all` answers every request with 500.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

pub fn stub_vector(text: &str) -> Vec<f64> {
    vec![text.len() as f64, text.as_bytes()[0] as f64 / 100.0, -0.5]
}

impl StubServer {
    pub fn start(fail_all: bool) -> StubServer {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let url = format!("http://{}/v1/embeddings", server.server_addr().to_ip().expect("ip addr"));
        let requests = Arc::new(AtomicUsize::new(0));
        let (srv, count) = (server.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                count.fetch_add(1, Ordering::SeqCst);
                if fail_all {
                    let _ = req.respond(tiny_http::Response::from_string("upstream down").with_status_code(500));
                    continue;
                }
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).expect("read body");
                let v: serde_json::Value = serde_json::from_str(&body).expect("json body");
                let data: Vec<serde_json::Value> = v["input"]
                    .as_array()
                    .expect("input array")
                    .iter()
                    .enumerate()
                    .map(|(i, t)| serde_json::json!({"index": i, "embedding": stub_vector(t.as_str().unwrap())}))
                    .collect();
                let resp = serde_json::json!({ "data": data }).to_string();
                let _ = req.respond(tiny_http::Response::from_string(resp));
            }
        });
        StubServer { url, requests, server, handle: Some(handle) }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
