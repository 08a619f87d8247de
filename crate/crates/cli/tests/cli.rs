use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tafs_core::bench::fixture::{canonical_mutations, write_fixture, FixturePaths, FixtureSpec};
use tafs_core::bench::validate::stats_json;
use tafs_core::bench::{validate_manifest, Manifest};
use tafs_core::cloudstore::StoreIndex;
use tempfile::TempDir;

fn tafs(args: &[&str]) -> (i32, Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tafs")).args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("stdout is not json ({e}): {stdout}"));
    (out.status.code().unwrap(), json, String::from_utf8(out.stderr).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> (TempDir, FixturePaths) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&dir.path().join("fx"), &FixtureSpec::default()).unwrap();
    (dir, paths)
}

#[test]
fn validate_prints_stats() {
    let (_d, p) = fixture();
    let (code, json, stderr) = tafs(&["validate", s(&p.manifest)]);
    assert_eq!(code, 0, "{stderr}");
    let m = Manifest::load(&p.manifest).unwrap();
    let want: Value = serde_json::from_str(&stats_json(&validate_manifest(&m).unwrap())).unwrap();
    assert_eq!(json, want);
}

#[test]
fn validate_reports_located_errors_with_exit_1() {
    let (d, p) = fixture();
    let base = Manifest::load(&p.manifest).unwrap();
    for m in canonical_mutations() {
        let mut broken = base.clone();
        (m.apply)(&mut broken);
        let path = d.path().join(format!("{}.json", m.name.replace(' ', "_")));
        broken.save(&path).unwrap();
        let (code, json, _) = tafs(&["validate", s(&path)]);
        assert_eq!(code, 1, "{}", m.name);
        assert_eq!(json["kind"], "validation");
        let paths: Vec<&str> = json["detail"]["errors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["path"].as_str().unwrap())
            .collect();
        assert!(paths.contains(&m.expected_path), "{}: {paths:?}", m.name);
    }
}

#[test]
fn malformed_and_missing_manifests() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(tafs(&["validate", s(&bad)]).0, 1);
    let (code, json, _) = tafs(&["validate", s(&d.path().join("absent.json"))]);
    assert_eq!(code, 2);
    assert_eq!(json["kind"], "infrastructure");
    let (code, _, _) = tafs(&["bench", s(&d.path().join("absent.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn oracle_bench_is_perfect() {
    let (d, p) = fixture();
    let out = d.path().join("r");
    let (code, json, stderr) = tafs(&[
        "bench",
        s(&p.manifest),
        "--backend",
        "oracle",
        "--segmentation",
        "oracle",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let o = &json["overall"];
    assert_eq!(o["miou_pct"], 100.0);
    assert_eq!(o["auc_pct"], 100.0);
    assert_eq!(o["sim"], 1.0);
    assert_eq!(o["mae"], 0.0);
    assert_eq!(o["compatible_refused"], 0);
    assert_eq!(json["method"], "oracle+oracle");
    for f in ["table.csv", "environments.csv", "areas.csv", "affordances.csv", "summary.json", "raw.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn export_report_round_trips() {
    let (d, p) = fixture();
    let out = d.path().join("r");
    let args = ["bench", s(&p.manifest), "--segmentation", "noisy", "--sigma", "0.1", "--backend", "oracle", "--out", s(&out)];
    assert_eq!(tafs(&args).0, 0);
    let (code, json, _) = tafs(&["export-report", s(&out.join("raw.json")), "--format", "json"]);
    assert_eq!(code, 0);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json, summary);
    let csv_dir = d.path().join("csv");
    let (code, json, _) = tafs(&["export-report", s(&out.join("raw.json")), "--out", s(&csv_dir)]);
    assert_eq!(code, 0);
    assert_eq!(json["files"].as_array().unwrap().len(), 4);
    for f in ["table.csv", "environments.csv", "areas.csv", "affordances.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(csv_dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn query_refusal_is_success() {
    let (_d, p) = fixture();
    let img = "scene_00_img00";
    let (code, json, _) = tafs(&["query", img, "take the table", "--manifest", s(&p.manifest)]);
    assert_eq!(code, 0);
    assert_eq!(json["decision"], "refuse");
    assert_eq!(json["reason_code"], "PHYSICAL_ACT");
    assert!(json.get("map").is_none());

    let (code, json, _) = tafs(&["query", "no_such_image", "sit on the sofa", "--manifest", s(&p.manifest)]);
    assert_eq!(code, 1);
    assert!(json["error"].is_string());
}

#[test]
fn query_accepts_an_image_file_and_a_cloud() {
    let (_d, p) = fixture();
    let m = Manifest::load(&p.manifest).unwrap();
    let img = m.images.iter().find(|i| i.applicable_query_ids.iter().any(|q| q == "x_where_sit")).unwrap();
    let file = p.root.join(&img.path);
    let cloud = p.store.join("clouds/sofa__00.afpc");
    let (code, json, stderr) = tafs(&[
        "query",
        s(&file),
        "sit on the sofa",
        "--manifest",
        s(&p.manifest),
        "--cloud",
        s(&cloud),
        "--threshold",
        "0.2",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(json["map"]["cloud_id"], "sofa__00");
    assert!(json["transform"].is_object());
}

#[test]
fn config_file_with_flag_override() {
    let (d, _p) = fixture();
    let cfg = d.path().join("tafs.toml");
    fs::write(
        &cfg,
        "manifest = \"fx/manifest.json\"\nbackend = \"toy\"\n[segmentation]\nmode = \"oracle\"\n",
    )
    .unwrap();
    let img = "scene_00_img00";
    let (code, json, _) = tafs(&["--config", s(&cfg), "bench", "--backend", "oracle", "--out", s(&d.path().join("r"))]);
    assert_eq!(code, 0);
    assert_eq!(json["method"], "oracle+oracle");
    let (code, _, _) = tafs(&["--config", s(&cfg), "query", img, "give me an apple"]);
    assert_eq!(code, 0);

    fs::write(&cfg, "manifest = \"fx/manifest.json\"\nbogus = 1\n").unwrap();
    assert_eq!(tafs(&["--config", s(&cfg), "bench"]).0, 2);
}

#[test]
fn unreachable_remote_backend_exits_2() {
    let (_d, p) = fixture();
    let url = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let (code, json, _) = tafs(&["bench", s(&p.manifest), "--backend", "remote", "--remote-url", &url, "--remote-timeout", "2"]);
    assert_eq!(code, 2);
    assert_eq!(json["kind"], "infrastructure");
}

#[test]
fn gen_weights_is_seeded_and_matches_the_implicit_bundle() {
    let (d, p) = fixture();
    let w = |name: &str, seed: &str| -> (PathBuf, String) {
        let path = d.path().join(name);
        let (code, json, _) = tafs(&["gen-weights", s(&path), "--manifest", s(&p.manifest), "--seed", seed]);
        assert_eq!(code, 0);
        (path, json["sha256"].as_str().unwrap().to_string())
    };
    let (a, ha) = w("a.bin", "5");
    let (_, hb) = w("b.bin", "5");
    let (_, hc) = w("c.bin", "6");
    assert_eq!(ha, hb);
    assert_ne!(ha, hc);

    let bench = |extra: &[&str], out: &str| -> Value {
        let out = d.path().join(out);
        let mut args = vec!["bench", s(&p.manifest), "--out", s(&out)];
        args.extend_from_slice(extra);
        let (code, json, stderr) = tafs(&args);
        assert_eq!(code, 0, "{stderr}");
        json["overall"].clone()
    };
    assert_eq!(bench(&["--weights", s(&a), "--seed", "5"], "r1"), bench(&["--seed", "5"], "r2"));
}

#[test]
fn ingest_rebuilds_the_store_index() {
    let (_d, p) = fixture();
    let before = StoreIndex::load(&p.store).unwrap();
    fs::remove_file(p.store.join("index.json")).unwrap();
    let (code, json, stderr) = tafs(&["ingest", s(&p.store)]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(json["clouds"], before.len());
    let after = StoreIndex::load(&p.store).unwrap();
    assert_eq!(after.ids().collect::<Vec<_>>(), before.ids().collect::<Vec<_>>());
    for (a, b) in after.records().zip(before.records()) {
        assert_eq!(a.cloud.points(), b.cloud.points());
        assert_eq!(a.gt_maps.len(), b.gt_maps.len());
    }
}

#[test]
fn synth_fixture_full_statistics() {
    let d = tempfile::tempdir().unwrap();
    let (code, json, _) = tafs(&["synth-fixture", s(d.path()), "--full-statistics"]);
    assert_eq!(code, 0);
    let (code, stats, _) = tafs(&["validate", json["manifest"].as_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(stats["totals"]["images"], 9248);
}
