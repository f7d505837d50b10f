use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use chainhash_core::chain::ChainFile;
use chainhash_net::simulator::{serve, SimulatorProfile};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_chainhash");

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        f.write("vocab.txt", &(0..300).map(|i| format!("tok{i}\n")).collect::<String>());
        f.write("table.txt", &(0..256).map(|i| format!("answer{i:03}\n")).collect::<String>());
        f.write(
            "questions.txt",
            "what colour is the quiet river\nname the seventh lantern\nwhich door opens inward\nwho keeps the brass key\n",
        );
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn new_chain(&self, out: &str) -> PathBuf {
        let o = run(&[
            "chain", "new",
            "--questions", s(&self.path("questions.txt")),
            "--table", s(&self.path("table.txt")),
            "--out", s(&self.path(out)),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        self.path(out)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn stdout_lines(o: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
        .collect()
}

#[test]
fn chain_new_is_byte_stable_and_check_catches_a_flipped_index() {
    let f = Fixture::new();
    let a = std::fs::read(f.new_chain("a.json")).unwrap();
    let b = std::fs::read(f.new_chain("b.json")).unwrap();
    assert_eq!(a, b);

    let ok = run(&["chain", "check", s(&f.path("a.json"))]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("ok, 4 assignments"));

    let mut chain = ChainFile::from_json(std::str::from_utf8(&a).unwrap()).unwrap();
    chain.assignments[2].target_index ^= 1;
    f.write("bad.json", &chain.to_json());
    let bad = run(&["chain", "check", s(&f.path("bad.json"))]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("assignment 2"));
}

#[test]
fn keyed_chains_need_the_key() {
    let f = Fixture::new();
    let key = f.write("k.bin", "0123456789abcdef0123");
    let o = run(&[
        "chain", "new",
        "--questions", s(&f.path("questions.txt")),
        "--table", s(&f.path("table.txt")),
        "--key-file", s(&key),
        "--out", s(&f.path("keyed.json")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run(&["chain", "check", s(&f.path("keyed.json"))]).status.code(), Some(2));
    let with = run(&["chain", "check", s(&f.path("keyed.json")), "--key-file", s(&key)]);
    assert_eq!(with.status.code(), Some(0));
    // the key itself never lands in the chain file
    let text = std::fs::read_to_string(f.path("keyed.json")).unwrap();
    assert!(!text.contains("0123456789abcdef"));
}

#[test]
fn random_questions_split_and_collusion_layouts() {
    let f = Fixture::new();
    let o = run(&[
        "--format", "jsonl",
        "chain", "new",
        "--random", "9", "--vocab", s(&f.path("vocab.txt")), "--seed", "5",
        "--table", s(&f.path("table.txt")),
        "--num-chains", "3",
        "--out", s(&f.path("split")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_lines(&o).len(), 9);
    for i in 0..3 {
        let c = ChainFile::from_json(&std::fs::read_to_string(f.path(&format!("split/chain-{i}.json"))).unwrap()).unwrap();
        assert_eq!(c.questions.len(), 3);
    }

    let o = run(&[
        "chain", "new",
        "--random", "12", "--vocab", s(&f.path("vocab.txt")),
        "--table", s(&f.path("table.txt")),
        "--instances", "4", "--collusion-bound", "2",
        "--out", s(&f.path("coll")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let map: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("coll/instances.json")).unwrap()).unwrap();
    assert_eq!(map["1"].as_array().unwrap().len(), 3);
    assert!(f.path("coll/chain-1-2.json").exists());

    // pool too small for C(4,2) = 6 two-question chains
    let o = run(&[
        "chain", "new",
        "--random", "11", "--vocab", s(&f.path("vocab.txt")),
        "--table", s(&f.path("table.txt")),
        "--instances", "4", "--collusion-bound", "2",
        "--out", s(&f.path("coll2")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["chain", "new", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let f = Fixture::new();
    // missing input file is a validation failure, not a usage one
    let o = run(&["chain", "check", s(&f.path("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_trials_reports() {
    let o = run(&["--format", "jsonl", "metrics", "trials", "--probs", "0.41,0.41,0.41,0.41,0.41,0.41,0.41,0.41,0.41,0.41", "--confidence", "0.95"]);
    assert_eq!(o.status.code(), Some(0));
    let v = &stdout_lines(&o)[0];
    assert!((v["p_two_single_trial"].as_f64().unwrap() - 0.9594).abs() < 1e-4);
    assert_eq!(v["required_trials"]["trials"], 1);

    let o = run(&["--format", "jsonl", "metrics", "trials", "--probs", "0,0,0"]);
    assert_eq!(stdout_lines(&o)[0]["required_trials"], "removed");

    let o = run(&["metrics", "trials", "--probs", "0.5,1.2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["metrics", "trials", "--probs", "0.1,0.1"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("questions"), "{text}");
}

#[test]
fn dataset_build_writes_expected_records() {
    let f = Fixture::new();
    let chain = f.new_chain("c.json");
    let meta: String = (0..5).map(|i| format!("You are assistant number {i}.\n")).collect();
    f.write("meta.txt", &meta);
    f.write("anchors.jsonl", "{\"prompt\":\"hello there\",\"response\":\"hi\"}\n");
    let o = run(&[
        "--format", "jsonl",
        "dataset", "build",
        "--chain", s(&chain),
        "--vocab", s(&f.path("vocab.txt")),
        "--meta-prompts", s(&f.path("meta.txt")),
        "--anchors", s(&f.path("anchors.jsonl")),
        "--repetitions", "3",
        "--out", s(&f.path("ds.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = &stdout_lines(&o)[0];
    assert_eq!(summary["fingerprint"], 4 * 3 * 6);
    let records = chainhash_core::dataset::parse_jsonl(&std::fs::read_to_string(f.path("ds.jsonl")).unwrap()).unwrap();
    assert_eq!(records.len(), 4 * 3 * 6 + 1);

    let o = run(&[
        "dataset", "build", "--chain", s(&chain), "--vocab", s(&f.path("vocab.txt")),
        "--mode", "base", "--prompt-format", "nosuch", "--out", s(&f.path("x.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn verify_run_against_simulator_exit_codes() {
    let f = Fixture::new();
    let chain_path = f.new_chain("c.json");
    let chain = ChainFile::from_json(&std::fs::read_to_string(&chain_path).unwrap()).unwrap();
    let verified = chain.verify_integrity(None).unwrap();
    let good = serve(SimulatorProfile::from_chain(&verified, 1.0, 1), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let dead = serve(SimulatorProfile::from_chain(&verified, 0.0, 1), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let (good_url, dead_url) = (good.url(), dead.url());
    let cp = chain_path.clone();
    let transcript = f.path("t.jsonl");
    let tp = transcript.clone();
    let cfg = f.write("endpoints.toml", &format!("[endpoints.sim]\nbase_url = \"{good_url}\"\nmax_parallel = 2\n"));

    let (owned, not_owned, lenient, named) = tokio::task::spawn_blocking(move || {
        let owned = run(&["--format", "jsonl", "verify", "run", "--chain", s(&cp), "--endpoint", &good_url, "--transcript", s(&tp), "--assert-owned"]);
        let not_owned = run(&["verify", "run", "--chain", s(&cp), "--endpoint", &dead_url, "--max-trials", "3", "--assert-owned"]);
        let lenient = run(&["verify", "run", "--chain", s(&cp), "--endpoint", &dead_url, "--max-trials", "3"]);
        let named = run(&["verify", "run", "--chain", s(&cp), "--endpoint", "sim", "--config", s(&cfg)]);
        (owned, not_owned, lenient, named)
    })
    .await
    .unwrap();

    assert_eq!(owned.status.code(), Some(0), "{}", String::from_utf8_lossy(&owned.stderr));
    let lines = stdout_lines(&owned);
    let summary = lines.last().unwrap();
    assert_eq!(summary["verdict"], "owned");
    assert_eq!(summary["trials_used"], 1);
    assert_eq!(std::fs::read_to_string(&transcript).unwrap().lines().count(), 4);

    assert_eq!(not_owned.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&not_owned.stdout).contains("verdict: not_proven"));
    assert_eq!(lenient.status.code(), Some(0));
    assert_eq!(named.status.code(), Some(0), "{}", String::from_utf8_lossy(&named.stderr));
    good.shutdown().await;
    dead.shutdown().await;

    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let o = run(&["verify", "run", "--chain", s(&chain_path), "--endpoint", &format!("http://{addr}"), "--retries", "0", "--max-trials", "2"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["verify", "run", "--chain", s(&chain_path), "--endpoint", "not-a-url"]);
    assert_eq!(o.status.code(), Some(2));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn ownership_resolve_names_the_original_publisher() {
    let f = Fixture::new();
    // P's chain, and two later claimants with their own chains
    let pc = f.new_chain("p.json");
    let mk = |name: &str, seed: &str| {
        let o = run(&[
            "chain", "new", "--random", "4", "--vocab", s(&f.path("vocab.txt")), "--seed", seed,
            "--table", s(&f.path("table.txt")), "--out", s(&f.path(name)),
        ]);
        assert_eq!(o.status.code(), Some(0));
        ChainFile::from_json(&std::fs::read_to_string(f.path(name)).unwrap()).unwrap().verify_integrity(None).unwrap()
    };
    let a0 = mk("a0.json", "1");
    let a1 = mk("a1.json", "2");
    let p = ChainFile::from_json(&std::fs::read_to_string(&pc).unwrap()).unwrap().verify_integrity(None).unwrap();

    // M carries P; M0 carries P and A0; M1 carries all three
    let profile = |chains: &[&chainhash_core::chain::VerifiedChain]| {
        let mut prof = SimulatorProfile::new(3);
        for c in chains {
            prof.qa.extend(SimulatorProfile::from_chain(c, 1.0, 3).qa);
        }
        prof
    };
    let local = "127.0.0.1:0".parse().unwrap();
    let m = serve(profile(&[&p]), local).await.unwrap();
    let m0 = serve(profile(&[&p, &a0]), local).await.unwrap();
    let m1 = serve(profile(&[&p, &a0, &a1]), local).await.unwrap();
    let cfg = serde_json::json!({
        "claims": [
            {"party": "P", "chain": "p.json"},
            {"party": "A0", "chain": "a0.json"},
            {"party": "A1", "chain": "a1.json"}
        ],
        "models": [
            {"model_id": "M", "publisher": "P", "endpoint": {"base_url": m.url()}},
            {"model_id": "M0", "publisher": "A0", "endpoint": {"base_url": m0.url()}},
            {"model_id": "M1", "publisher": "A1", "endpoint": {"base_url": m1.url()}}
        ]
    });
    let cfg_path = f.write("resolve.json", &cfg.to_string());
    let o = tokio::task::spawn_blocking(move || {
        run(&["--format", "jsonl", "ownership", "resolve", "--config", s(&cfg_path), "--max-trials", "5"])
    })
    .await
    .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    for l in lines.iter().filter(|l| l["type"] == "model") {
        assert_eq!(l["ruling"]["ruling"]["outcome"], "owner", "{l}");
        assert_eq!(l["ruling"]["ruling"]["party"], "P", "{l}");
    }
    m.shutdown().await;
    m0.shutdown().await;
    m1.shutdown().await;
}

#[test]
fn simulate_serve_prints_its_address_and_answers() {
    let f = Fixture::new();
    let chain_path = f.new_chain("c.json");
    let verified = ChainFile::from_json(&std::fs::read_to_string(&chain_path).unwrap())
        .unwrap()
        .verify_integrity(None)
        .unwrap();
    let profile = f.write(
        "profile.json",
        &serde_json::to_string(&SimulatorProfile::from_chain(&verified, 1.0, 9)).unwrap(),
    );
    let mut child = Command::new(BIN)
        .args(["simulate", "serve", "--profile", s(&profile), "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_owned();
    let o = run(&["verify", "run", "--chain", s(&chain_path), "--endpoint", &url, "--assert-owned"]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = f.write("bad.json", r#"{"version": 1, "seed": 1, "qa": [{"question": "q", "target": "t", "success_prob": 2.0}]}"#);
    let o = run(&["simulate", "serve", "--profile", s(&bad), "--bind", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(2));
}
