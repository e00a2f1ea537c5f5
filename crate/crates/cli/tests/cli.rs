use std::process::Command;

fn nvgate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nvgate"))
}

#[test]
fn strategies_prints_twenty_nested_sets() {
    let out = nvgate().arg("strategies").output().unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let strategies = doc["strategies"].as_array().unwrap();
    assert_eq!(strategies.len(), 20);
    assert_eq!(strategies[19]["tuples"].as_array().unwrap().len(), 20);
    assert_eq!(doc["amplification"]["kind"], "multiplicative");
}

#[test]
fn additive_strategies_with_few_tuples() {
    let out = nvgate()
        .args([
            "strategies",
            "--additive",
            "--factor",
            "0.01",
            "--count",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["strategies"].as_array().unwrap().len(), 3);
    assert_eq!(doc["amplification"]["kind"], "additive");
}

#[test]
fn small_experiment_writes_reports() {
    let dir = std::env::temp_dir().join(format!("nvgate-cli-{}", std::process::id()));
    let plan = dir.join("plan.json");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        &plan,
        r#"{"combinations": [["geth"], ["geth", "besu"]], "strategies": [1, 17],
            "workload": {"kind": "B", "total_requests": 400, "interval_ms": 5, "seed": 1}}"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = nvgate()
        .args(["experiment", "--plan"])
        .arg(&plan)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let tables = std::fs::read_to_string(out_dir.join("tables.txt")).unwrap();
    assert!(tables.contains("FI17") && tables.contains("geth+besu"));
    let csv = std::fs::read_to_string(out_dir.join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(out_dir.join("logs/geth+besu__fi17.jsonl").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_persona_fails() {
    let out = nvgate()
        .args([
            "simnode",
            "--persona",
            "parity",
            "--port",
            "0",
            "--control-port",
            "0",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

#[test]
fn workload_run_logs_one_record_per_request() {
    let (port, control) = (free_port(), free_port());
    let mut node = nvgate()
        .args(["simnode", "--persona", "geth", "--port"])
        .arg(port.to_string())
        .arg("--control-port")
        .arg(control.to_string())
        .spawn()
        .unwrap();
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    while std::net::TcpStream::connect(addr).is_err() {
        assert!(std::time::Instant::now() < deadline, "simnode never came up");
        std::thread::sleep(std::time::Duration::from_millis(20));
    }

    let log = std::env::temp_dir().join(format!("nvgate-wl-{}.jsonl", std::process::id()));
    let out = nvgate()
        .args(["workload", "run", "--kind", "B", "--target"])
        .arg(format!("http://{addr}"))
        .args(["--count", "20", "--interval-ms", "5", "--seed", "3", "--out"])
        .arg(&log)
        .output()
        .unwrap();
    let _ = node.kill();
    let _ = node.wait();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&log).unwrap();
    let records: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 20);
    assert!(records.iter().all(|r| r["status"] == "AVAILABLE"), "{text}");
    std::fs::remove_file(&log).unwrap();
}
