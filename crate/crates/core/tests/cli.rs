use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spv")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(dir: &Path, seed: &str) {
    let o = spv(&["fixture", "--blocks", "8", "--txs", "4", "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![];
    for name in ["chain.json", "proofs.json", "bundle.json", "blocks/block_0000.json", "blocks/block_0007.json"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).unwrap()));
    }
    files
}

#[test]
fn fixture_is_reproducible_and_valid() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fixture(a.path(), "1");
    fixture(b.path(), "1");
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));

    let o = spv(&["verify-chain", a.path().join("chain.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "OK 8 headers");
}

#[test]
fn mining_cap_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = spv(&["fixture", "--bits", "0x1d00ffff", "--max-iterations", "1000", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "2");
    let chain = dir.path().join("chain.json");
    let bundle = dir.path().join("bundle.json");

    for mode in ["strict", "inclusion"] {
        let o = spv(&["verify", bundle.to_str().unwrap(), chain.to_str().unwrap(), "--mode", mode]);
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", stdout(&o));
        let decision: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(decision["accepted"], true);
    }

    let mut b: Value = serde_json::from_slice(&std::fs::read(&bundle).unwrap()).unwrap();
    let sibling = b["parent_proofs"][0]["proof"]["steps"][0]["sibling_hex"].as_str().unwrap().to_string();
    let flipped = format!("{}{}", if sibling.starts_with('0') { "1" } else { "0" }, &sibling[1..]);
    b["parent_proofs"][0]["proof"]["steps"][0]["sibling_hex"] = Value::String(flipped);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, b.to_string()).unwrap();
    let o = spv(&["verify", tampered.to_str().unwrap(), chain.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let decision: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(decision["accepted"], false);
    assert_eq!(decision["failures"], serde_json::json!([{ "kind": "ParentInclusion", "parent": 0 }]));

    let text = std::fs::read_to_string(&bundle).unwrap();
    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    let o = spv(&["verify", truncated.to_str().unwrap(), chain.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prove_and_confirmations() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "3");
    let proof = dir.path().join("proof.json");
    let block = dir.path().join("blocks/block_0005.json");
    let o = spv(&["prove", block.to_str().unwrap(), "--index", "2", "--out", proof.to_str().unwrap()]);
    assert!(o.status.success());
    let o = spv(&["confirmations", dir.path().join("chain.json").to_str().unwrap(), proof.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["included"], true);
    assert_eq!(report["confirmations"], 3);
}

#[test]
fn tables_csv() {
    let o = spv(&["tables", "--alpha-grid", "0.1,0.3", "--z-grid", "0,6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,z,fraud_bound,race_prob,reorg_tail");
    assert_eq!(lines.len(), 5);
    let row: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(&row[..2], &["0.3", "6"]);
    let fraud: f64 = row[2].parse().unwrap();
    assert!((fraud - 6.1964e-3).abs() < 1e-7, "{fraud}");

    let o = spv(&["tables", "--alpha-grid", "1.5", "--z-grid", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.json");
    let body = serde_json::json!({
        "config": { "topology": { "kind": "ring", "n_nodes": 12 }, "forward_prob": 0.7, "seed": 4 },
        "scenario": { "origin": 0, "message": { "type": "transaction", "txid": "11".repeat(32), "fee": 3 }, "duration_s": 1000.0 }
    });
    std::fs::write(&sim, body.to_string()).unwrap();
    let a = spv(&["sim", sim.to_str().unwrap()]);
    let b = spv(&["sim", sim.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    let c = spv(&["sim", sim.to_str().unwrap(), "--seed", "5"]);
    assert_ne!(stdout(&a), stdout(&c));

    let grid = dir.path().join("grid.json");
    let body = serde_json::json!({
        "base": body["config"],
        "scenario": body["scenario"],
        "topologies": [{ "kind": "ring", "n_nodes": 12 }, { "kind": "complete", "n_nodes": 12 }],
        "forward_probs": [0.5, 1.0],
        "seeds": [1, 2, 3]
    });
    std::fs::write(&grid, body.to_string()).unwrap();
    let o = spv(&["sweep", grid.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("config_hash,tau_s,redundancy,delivery,trace_digest"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
}
