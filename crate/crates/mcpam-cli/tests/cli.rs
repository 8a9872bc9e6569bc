use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use mcpam::bounds::{derive_constants, PowerVarianceFamily};
use mcpam::distributed::{encode, read_frame, Envelope, Message};
use mcpam::ingest::{clustering_cost, gen_gaussian_mixture, write_csv};
use mcpam::{KTuple, Metric, MetricKind, MetricSpec, Point};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcpam"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn five(dir: &Path) -> PathBuf {
    let p = dir.join("five.csv");
    std::fs::write(&p, "x\n90\n170\n60\n200\n190\n").unwrap();
    p
}

fn blobs(dir: &Path) -> PathBuf {
    let p = dir.join("blobs.csv");
    write_csv(&p, &gen_gaussian_mixture(3, 2, 150, 3.0, 2).unwrap()).unwrap();
    p
}

#[test]
fn pam_on_five_points() {
    let d = tempfile::tempdir().unwrap();
    let f = five(d.path());
    let v = ok_json(&["cluster", "--algo", "pam", "--metric", "l1", "--input", f.to_str().unwrap()]);
    assert_eq!(v["medoid"]["slots"][0]["numeric"][0], 170.0);
    assert_eq!(v["ecc"]["mean"], 48.0);
    assert!(v["ecc"]["lo"].as_f64().unwrap() < 48.0);
}

#[test]
fn same_config_same_bytes() {
    let d = tempfile::tempdir().unwrap();
    let f = blobs(d.path());
    let args = ["cluster", "--k", "3", "--n-start", "50", "--seed", "9", "--trace", "--input", f.to_str().unwrap()];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["cluster", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = run(&["cluster"]);
    assert_eq!(o.status.code(), Some(2));
    let d = tempfile::tempdir().unwrap();
    let f = five(d.path());
    let o = run(&["cluster", "--k", "9", "--input", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.csv");
    std::fs::write(&p, "x\n1\nzz\n").unwrap();
    let o = run(&["cluster", "--input", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}

#[test]
fn config_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let f = five(d.path());
    let cfg = d.path().join("cfg.json");
    let o = run(&["cluster", "--metric", "l1", "--n-start", "3", "--input", f.to_str().unwrap(), "--print-config"]);
    std::fs::write(&cfg, &o.stdout).unwrap();
    let v = ok_json(&["cluster", "--config", cfg.to_str().unwrap(), "--seed", "5", "--print-config"]);
    assert_eq!(v["args"]["n_start"], 3);
    assert_eq!(v["args"]["seed"], 5);
    assert_eq!(v["args"]["metric"], "l1");
    let direct = run(&["cluster", "--metric", "l1", "--n-start", "3", "--input", f.to_str().unwrap()]);
    let via = run(&["cluster", "--config", cfg.to_str().unwrap()]);
    assert_eq!(direct.stdout, via.stdout);
    std::fs::write(&cfg, r#"{"command":"cluster","args":{"nope":1}}"#).unwrap();
    assert_eq!(run(&["cluster", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"command":"bounds","args":{}}"#).unwrap();
    assert_eq!(run(&["cluster", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bounds_constants_and_p_max() {
    let v = ok_json(&["bounds", "--family", "chi2"]);
    let c = derive_constants(&PowerVarianceFamily::noncentral_chi2(), 32.0).unwrap();
    let got: mcpam::bounds::BoundConstants = serde_json::from_value(v["constants"].clone()).unwrap();
    assert_eq!(got, c);
    let o = run(&["bounds", "--m", "100", "--p", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_max"));
    let v = ok_json(&["bounds", "--m", "10000", "--p", "20"]);
    assert!(v["tolerance"]["n"].as_f64().unwrap() > 0.0);
    let fam = r#"{"alpha":2.0,"beta":0.0,"gamma":1.0,"k_var":0.0,"kappa_ub":3.0}"#;
    let v = ok_json(&["bounds", "--family", fam]);
    assert!(v["constants"]["delta_c"].is_null());
}

#[test]
fn bounds_grid_csv_non_increasing() {
    let o = run(&["bounds", "--n", "1000", "--delta-grid", "0.01:5:200", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "delta,z0_ub,ub3_normal,ub3_be,ub3_gen");
    let col: Vec<f64> = lines.map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(col.len(), 200);
    assert!(col.windows(2).all(|w| w[1] <= w[0]), "{col:?}");
}

fn csv_rows(out: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(out).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn verify_mme_cases() {
    let o = run(&["verify-mme", "--family", "gaussian", "--means", "3", "--n", "5", "--trials", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&o.stdout);
    assert_eq!(rows[0][3], "0");

    // two unit-variance Gaussian arms one apart, n = 1
    let o = run(&["verify-mme", "--family", "gaussian", "--means", "1,2", "--n", "1", "--trials", "100000", "--seed", "3"]);
    let rows = csv_rows(&o.stdout);
    let (e, se): (f64, f64) = (rows[0][3].parse().unwrap(), rows[0][4].parse().unwrap());
    assert!((e - 0.23975).abs() <= 3.0 * se, "{e} {se}");

    let o = run(&["verify-mme", "--means", "1,1.5,2", "--n", "1", "--trials", "20"]);
    let rows = csv_rows(&o.stdout);
    assert_eq!(rows[0][6], "false");
    assert_eq!(rows[0].get(7).map(String::as_str).unwrap_or(""), "");
}

struct Worker {
    child: Child,
    addr: String,
}

fn spawn_worker() -> Worker {
    let mut child = bin().args(["worker", "--listen", "127.0.0.1:0"]).stderr(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    Worker { child, addr }
}

#[test]
fn master_matches_single_node() {
    let d = tempfile::tempdir().unwrap();
    let f = blobs(d.path());
    let common = ["--k", "3", "--n-start", "60", "--growth", "4", "--seed", "7", "--trace", "--input", f.to_str().unwrap()];
    let local = ok_json(&[&["cluster"][..], &common].concat());
    for c in [1, 4] {
        let mut ws: Vec<Worker> = (0..c).map(|_| spawn_worker()).collect();
        let list = ws.iter().map(|w| w.addr.clone()).collect::<Vec<_>>().join(",");
        let remote = ok_json(&[&["master", "--workers", &list][..], &common].concat());
        for w in &mut ws {
            assert!(w.child.wait().unwrap().success());
        }
        assert_eq!(remote["medoid"], local["medoid"]);
        let swaps = |v: &Value| -> Vec<Value> {
            v["trace"].as_array().unwrap().iter().filter(|t| t["swapped"] == true).map(|t| t["minhi"].clone()).collect()
        };
        let decisions = |v: &Value| -> Vec<Value> {
            v["trace"].as_array().unwrap().iter().map(|t| t["exit"].clone()).collect()
        };
        assert_eq!(decisions(&remote), decisions(&local));
        assert_eq!(swaps(&remote).len(), swaps(&local).len());
        for (a, b) in swaps(&remote).iter().zip(swaps(&local)) {
            assert_eq!((&a["index"], &a["slot"]), (&b["index"], &b["slot"]));
        }
        if c == 1 {
            assert_eq!(remote["trace"], local["trace"]);
        }
        let rounds = remote["comm"]["rounds"].as_array().unwrap();
        assert!(rounds.iter().filter(|r| r["op"] == "eval_swaps").all(|r| r["messages"] == 3 * c));
    }
}

#[test]
fn worker_rejects_eval_before_load() {
    let mut w = spawn_worker();
    let mut s = std::net::TcpStream::connect(&w.addr).unwrap();
    let cur = KTuple::new(vec![Point::scalar(1.0)]).unwrap();
    let env = Envelope { round: 1, msg: Message::EvalSwaps { current: cur, alpha: 0.05, z: 1.96 } };
    std::io::Write::write_all(&mut s, &encode(&env).unwrap()).unwrap();
    let (reply, _) = read_frame(&mut s).unwrap().unwrap();
    assert_eq!(reply.round, 1);
    match reply.msg {
        Message::Error { message } => assert!(message.contains("LoadChunk"), "{message}"),
        other => panic!("{other:?}"),
    }
    let bye = Envelope { round: 2, msg: Message::Shutdown };
    std::io::Write::write_all(&mut s, &encode(&bye).unwrap()).unwrap();
    assert!(w.child.wait().unwrap().success());
}

#[test]
fn quality_report() {
    let d = tempfile::tempdir().unwrap();
    let f = blobs(d.path());
    let res = d.path().join("res.json");
    let o = run(&["cluster", "--algo", "pam", "--k", "3", "--input", f.to_str().unwrap(), "--out", res.to_str().unwrap()]);
    assert!(o.status.success());
    let q = ok_json(&["quality", "--input", f.to_str().unwrap(), "--result", res.to_str().unwrap()]);
    assert_eq!(q["ari"], 1.0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&res).unwrap()).unwrap();
    let medoid: KTuple = serde_json::from_value(r["medoid"].clone()).unwrap();
    let data = mcpam::ingest::load_csv(&f, None).unwrap();
    let m = Metric::new(&MetricSpec::new(MetricKind::L2), &data.schema).unwrap();
    assert_eq!(q["clustering_cost"].as_f64().unwrap(), clustering_cost(&data, &medoid, &m).unwrap());
    let o = run(&["quality", "--input", f.to_str().unwrap(), "--result", res.to_str().unwrap(), "--labels-col", "cls"]);
    assert_eq!(o.status.code(), Some(2));
}
