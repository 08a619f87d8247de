mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use tafs_core::affordseg::SegmentationMode;
use tafs_core::bench::runner::{run_benchmark, BenchError, BenchOptions};
use tafs_core::cloudstore::StoreIndex;
use tafs_core::config::{BackendKind, Config};
use tafs_core::geometry::apply_transform;
use tafs_core::pipeline::{Engine, PipelineError, QueryInput};
use tafs_core::vlm::{GroundingError, ImageInput};
use tafs_core::{DecisionOutcome, ReasonCode, RigidTransform, SegmentationResult};

fn ask(engine: &Engine, image_id: &str, text: &str) -> Result<SegmentationResult, PipelineError> {
    engine.run(&QueryInput {
        image: engine.image_input(image_id).unwrap(),
        text: text.into(),
        query_cloud: None,
    })
}

fn reason(r: &SegmentationResult) -> Option<ReasonCode> {
    r.decision.reason()
}

/// Image whose annotations include `label`.
fn image_with(engine: &Engine, label: &str) -> String {
    engine
        .manifest()
        .images
        .iter()
        .find(|i| i.annotations.iter().any(|a| a.label == label))
        .unwrap_or_else(|| panic!("no image with {label}"))
        .image_id
        .clone()
}

#[test]
fn decision_matrix_with_oracle_grounding() {
    let f = common::small();
    let e = f.engine(BackendKind::Oracle, SegmentationMode::Oracle);
    let sofa_img = image_with(&e, "sofa");
    let cases: [(&str, &str, Option<ReasonCode>); 8] = [
        (&sofa_img, "sit on the sofa", None),
        (&sofa_img, "Where can I sit?", None),
        (&sofa_img, "give me an apple", Some(ReasonCode::PhysicalAct)),
        (&sofa_img, "bring me the sofa", Some(ReasonCode::PhysicalAct)),
        (&sofa_img, "pour water into the sofa", Some(ReasonCode::IncompatiblePair)),
        (&sofa_img, "cut the knife", Some(ReasonCode::ObjectNotFound)),
        (&sofa_img, "hello there", Some(ReasonCode::Unparseable)),
        (&sofa_img, "sofa", Some(ReasonCode::Unparseable)),
    ];
    for (image, text, want) in cases {
        let r = ask(&e, image, text).unwrap();
        assert_eq!(reason(&r), want, "{text}");
        assert!(r.is_consistent());
        if want.is_none() {
            assert_eq!(r.decision, DecisionOutcome::Proceed { label: "sofa".into() });
            let map = r.map.unwrap();
            assert_eq!(map.cloud_id(), "sofa__00");
            assert_eq!(map.affordance(), "sit");
        }
    }
}

#[test]
fn object_less_query_without_a_fitting_object() {
    let f = common::small();
    let e = f.engine(BackendKind::Oracle, SegmentationMode::Oracle);
    // an image with no sittable object at all
    let img = e
        .manifest()
        .images
        .iter()
        .find(|i| i.annotations.iter().all(|a| !e.manifest().object_action_map[&a.label].contains("sit")))
        .unwrap()
        .image_id
        .clone();
    let r = ask(&e, &img, "Where can I sit?").unwrap();
    match r.decision {
        DecisionOutcome::Refuse { reason_code, message } => {
            assert_eq!(reason_code, ReasonCode::ObjectNotFound);
            assert!(message.contains("suitable object"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stage_timings_are_recorded() {
    let f = common::small();
    let e = f.engine(BackendKind::Toy, SegmentationMode::Neural);
    let img = image_with(&e, "cup");
    let r = ask(&e, &img, "grasp the cup").unwrap();
    let stages: Vec<&str> = r.timing_ms.keys().map(String::as_str).collect();
    assert!(stages.contains(&"parse") && stages.contains(&"ground") && stages.contains(&"total"), "{stages:?}");
    if r.decision.is_proceed() {
        for s in ["retrieve", "register", "segment"] {
            assert!(stages.contains(&s));
        }
        assert!(r.map.unwrap().scores().iter().all(|s| (0.0..=1.0).contains(s)));
    }
    let total = r.timing_ms["total"];
    let parts: f64 = r.timing_ms.iter().filter(|(k, _)| *k != "total").map(|(_, v)| v).sum();
    assert!(total + 1e-9 >= parts);
}

#[test]
fn query_cloud_is_registered_onto_the_canonical_cloud() {
    let f = common::small();
    let e = f.engine(BackendKind::Oracle, SegmentationMode::Oracle);
    let img = image_with(&e, "sofa");
    let store = StoreIndex::load(&f.paths.store).unwrap();
    let canonical = &store.retrieve("sofa").unwrap().cloud;
    let truth = RigidTransform::from_axis_angle([0.0, 0.0, 1.0], 0.3).with_translation([0.2, 0.0, -0.1]);
    let observed = apply_transform(canonical, &truth.inverse());
    let r = e
        .run(&QueryInput {
            image: ImageInput::from_id(img.clone()),
            text: "sit on the sofa".into(),
            query_cloud: Some(observed),
        })
        .unwrap();
    let t = r.transform.unwrap();
    assert!((t.rotation() - truth.rotation()).abs().max() < 1e-6);
    assert!((t.translation() - truth.translation()).abs().max() < 1e-6);

    let plain = ask(&e, &img, "sit on the sofa").unwrap();
    assert_eq!(plain.transform, Some(RigidTransform::identity()));
}

/// Minimal HTTP/1.1 responder. The object name in the request picks the reply.
fn mock_grounding_server() -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert!(!req["image_b64"].as_str().unwrap().is_empty());
            let (status, reply) = match req["object"].as_str().unwrap() {
                "sofa" => (200, r#"{"label":"sofa","bbox":[0.1,0.2,0.5,0.6],"confidence":0.9}"#),
                "lamp" => (200, r#"{"label":"lamp","bbox":[0.1,0.2,0.5,0.6],"confidence":0.2}"#),
                "knife" => (200, "not json"),
                "vase" => (200, r#"{"label":"vase","bbox":[0.5,0.2,0.1,0.6],"confidence":0.9}"#),
                "door" => (500, r#"{"error":"boom"}"#),
                _ => (200, r#"{"label":null,"bbox":null,"confidence":null}"#),
            };
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (format!("http://{addr}"), hits)
}

fn remote_engine(f: &common::Fixture, url: &str) -> Engine {
    Engine::load(&Config {
        remote_url: Some(url.into()),
        remote_timeout_secs: 5.0,
        ..f.config(BackendKind::Remote, SegmentationMode::Oracle)
    })
    .unwrap()
}

#[test]
fn remote_backend_round_trip() {
    let f = common::small();
    let (url, hits) = mock_grounding_server();
    let e = remote_engine(&f, &url);
    let img = e.manifest().images[0].image_id.clone();

    let r = ask(&e, &img, "sit on the sofa").unwrap();
    assert!(r.decision.is_proceed());
    assert_eq!(r.grounding.unwrap().confidence, 0.9);
    assert_eq!(reason(&ask(&e, &img, "pour water into the sofa").unwrap()), Some(ReasonCode::IncompatiblePair));
    assert_eq!(reason(&ask(&e, &img, "press the lamp").unwrap()), Some(ReasonCode::LowConfidence));
    assert_eq!(reason(&ask(&e, &img, "grasp the apple").unwrap()), Some(ReasonCode::ObjectNotFound));
    // physical acts are decided without a round trip
    let before = hits.load(Ordering::SeqCst);
    assert_eq!(reason(&ask(&e, &img, "give me the cup").unwrap()), Some(ReasonCode::PhysicalAct));
    assert_eq!(hits.load(Ordering::SeqCst), before);

    let err = ask(&e, &img, "cut the knife").unwrap_err();
    assert!(matches!(err, PipelineError::Grounding(GroundingError::ProtocolError(_))), "{err:?}");
    assert!(err.is_backend_failure());
    let err = ask(&e, &img, "grasp the vase").unwrap_err();
    assert!(matches!(err, PipelineError::Grounding(GroundingError::ProtocolError(_))), "{err:?}");
    let err = ask(&e, &img, "open the door").unwrap_err();
    assert!(matches!(err, PipelineError::Grounding(GroundingError::BackendUnavailable(_))), "{err:?}");
}

#[test]
fn unreachable_backend_aborts_the_benchmark() {
    let f = common::small();
    // bind then drop, so the port is closed
    let url = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let e = remote_engine(&f, &url);
    let img = e.manifest().images[0].image_id.clone();
    let err = ask(&e, &img, "sit on the sofa").unwrap_err();
    assert!(matches!(err, PipelineError::Grounding(GroundingError::BackendUnavailable(_))));
    let opts = BenchOptions {
        threads: Some(2),
        ..BenchOptions::from_config(&Config::default())
    };
    match run_benchmark(&e, &opts) {
        Err(BenchError::Infrastructure { sample, .. }) => assert!(sample.contains(':')),
        other => panic!("expected infrastructure failure, got {:?}", other.map(|r| r.overall)),
    }
}

#[test]
fn engine_rejects_invalid_inputs() {
    let f = common::small();
    // missing cloud in the store
    let store_index = f.paths.store.join("index.json");
    let mut index: serde_json::Value = serde_json::from_slice(&std::fs::read(&store_index).unwrap()).unwrap();
    let before = index.to_string();
    if let Some(records) = index["records"].as_array_mut() {
        records.retain(|r| r["id"] != "sofa__00");
    }
    assert_ne!(before, index.to_string(), "index layout changed: {before:.200}");
    std::fs::write(&store_index, index.to_string()).unwrap();
    let err = Engine::load(&f.config(BackendKind::Oracle, SegmentationMode::Oracle)).err().unwrap();
    assert!(err.to_string().contains("sofa__00"), "{err}");

    let no_manifest = Config::default();
    assert!(Engine::load(&no_manifest).is_err());
}
