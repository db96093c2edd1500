//! Adapter contract suite against a scripted HTTP stub: strict-JSON
//! extraction, the retry/re-ask policy, and engine equivalence between
//! scripted and HTTP backends.

mod common;

use std::time::Duration;

use common::{StubResponse, StubServer};

use collabvr::backends::http::{
    EndpointConfig, HttpGenerator, HttpPlanner, HttpRouter, HttpVerifier,
};
use collabvr::backends::scripted::{plan, IdentityGenerator, ScriptedPlanner, ScriptedVerifier};
use collabvr::backends::{
    BackendError, BackendSet, FrameRef, Generator, GeneratorRequest, Planner, PlannerRequest,
    Router, RouterRequest, Verifier, VerifierRequest,
};
use collabvr::engine::{run_collabvr, EngineConfig};
use collabvr::types::{Clip, Confidence, Frame, Progress, RouterAction, Task, Verdict};

fn endpoint(url: &str) -> EndpointConfig {
    EndpointConfig { timeout_ms: 2_000, ..EndpointConfig::new(url, "stub-model") }
}

fn planner_request() -> PlannerRequest {
    PlannerRequest {
        task_prompt: "sort the shelf".into(),
        current_image: Frame::constant(3, 3, 0.5).into(),
        completed_steps: vec![],
        step_number: 1,
    }
}

fn test_clip() -> Clip {
    Clip {
        frames: vec![Frame::constant(3, 3, 0.5); 4],
        fps: 4.0,
        action_prompt: "a".into(),
        attempt_index: 1,
        step_index: 1,
        seed: 0,
        fault: None,
    }
}

fn verifier_request() -> VerifierRequest {
    VerifierRequest {
        task_prompt: "t".into(),
        planned_action: "a".into(),
        target_state: "s".into(),
        sampled_frames: vec![FrameRef::Frame(Frame::constant(3, 3, 0.5))],
    }
}

const PLANNER_BODY: &str = r#"{
  "observation": "a tidy shelf",
  "remaining_goal": "place the last book",
  "task_complete": false,
  "instruction": "slide the red book left",
  "target_state": "red book at the left edge",
  "estimated_steps_remaining": 1
}"#;

#[test]
fn planner_round_trip_is_field_faithful() {
    let stub = StubServer::start(vec![StubResponse::ok(PLANNER_BODY)]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    let step = planner.plan(&planner_request()).unwrap().value;
    assert_eq!(step.instruction, "slide the red book left");
    assert_eq!(step.observation, "a tidy shelf");
    assert_eq!(step.estimated_steps_remaining, 1);
    assert_eq!(step.step_index, 1);
    assert!(!step.task_complete);

    let body = stub.request_bodies().pop().unwrap();
    let wire: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(wire["prompt_template_id"], "step_planner");
    assert_eq!(wire["inputs"]["task_prompt"], "sort the shelf");
    assert_eq!(wire["inputs"]["step_number"], 1);
}

#[test]
fn prose_wrapped_verifier_body_round_trips() {
    let body = r#"Here is the JSON: {"verdict":"reject","action_executed":false,"progress":"none","good_fraction":0.3,"confidence":"high","reason":"wrong way","suggestion":"go right"} hope it helps"#;
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let verifier = HttpVerifier::new(endpoint(stub.url()));
    let verdict = verifier.verify(&verifier_request(), &test_clip()).unwrap().value;
    assert!(!verdict.is_accept());
    assert_eq!(verdict.good_fraction, Some(0.3));
    assert_eq!(verdict.suggestion, "go right");
}

#[test]
fn missing_good_fraction_defaults_with_warning() {
    let body = r#"{"verdict":"reject","action_executed":false,"progress":"none","confidence":"high","reason":"r","suggestion":"s"}"#;
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let verifier = HttpVerifier::new(endpoint(stub.url()));
    let metered = verifier.verify(&verifier_request(), &test_clip()).unwrap();
    assert_eq!(metered.value.good_fraction, Some(0.0));
    assert!(metered.meta.warning.is_some());
}

#[test]
fn five_hundred_then_ok_retries_to_success() {
    let stub = StubServer::start(vec![
        StubResponse::status(500, "boom"),
        StubResponse::status(500, "boom again"),
        StubResponse::ok(PLANNER_BODY),
    ]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    let step = planner.plan(&planner_request()).unwrap().value;
    assert_eq!(step.instruction, "slide the red book left");
    assert_eq!(stub.request_count(), 3, "three requests: two 500s then success");
}

#[test]
fn four_xx_fails_immediately() {
    let stub = StubServer::start(vec![StubResponse::status(400, "nope")]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    match planner.plan(&planner_request()) {
        Err(BackendError::Status { status: 400, .. }) => {}
        other => panic!("expected immediate 400, got {other:?}"),
    }
    assert_eq!(stub.request_count(), 1);
}

#[test]
fn timeouts_exhaust_the_retry_budget() {
    let slow = Duration::from_millis(600);
    let stub = StubServer::start(vec![
        StubResponse::delayed(PLANNER_BODY, slow),
        StubResponse::delayed(PLANNER_BODY, slow),
    ]);
    let cfg = EndpointConfig {
        timeout_ms: 100,
        max_retries: 2,
        ..EndpointConfig::new(stub.url(), "stub-model")
    };
    let planner = HttpPlanner::new(cfg);
    match planner.plan(&planner_request()) {
        Err(BackendError::Exhausted { attempts: 2, .. }) => {}
        other => panic!("expected exhausted retries, got {other:?}"),
    }
}

#[test]
fn malformed_body_triggers_exactly_one_reask() {
    let stub = StubServer::start(vec![
        StubResponse::ok("I will not answer in JSON today."),
        StubResponse::ok(PLANNER_BODY),
    ]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    let metered = planner.plan(&planner_request()).unwrap();
    assert_eq!(metered.value.instruction, "slide the red book left");
    assert!(metered.meta.warning.is_some());

    let bodies = stub.request_bodies();
    assert_eq!(bodies.len(), 2);
    assert!(!bodies[0].contains("Return ONLY the JSON object."));
    assert!(bodies[1].contains("Return ONLY the JSON object."));
}

#[test]
fn malformed_twice_surfaces_a_backend_error() {
    let stub = StubServer::start(vec![
        StubResponse::ok("still prose"),
        StubResponse::ok("prose forever"),
    ]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    match planner.plan(&planner_request()) {
        Err(BackendError::Malformed(_)) => {}
        other => panic!("expected malformed error, got {other:?}"),
    }
}

#[test]
fn unknown_router_action_is_treated_as_regen_with_warning() {
    let body = r#"{"action":"panic","suggestion":"s","reason":"r"}"#;
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let router = HttpRouter::new(endpoint(stub.url()));
    let req = RouterRequest {
        task_prompt: "t".into(),
        input_image: Frame::constant(3, 3, 0.0).into(),
        failed_video: vec![FrameRef::Frame(Frame::constant(3, 3, 0.0))],
        reject_reason: "r".into(),
        suggestion: "s".into(),
        good_fraction: 0.1,
    };
    let metered = router.route(&req, &test_clip()).unwrap();
    assert_eq!(metered.value.action, RouterAction::Regen);
    assert!(metered.meta.warning.is_some());
}

#[test]
fn generator_rejects_opaque_media_references() {
    let body = r#"{"frames": ["https://example.com/clip.mp4"], "fps": 16.0}"#;
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let generator = HttpGenerator::new(endpoint(stub.url()));
    let req = GeneratorRequest {
        conditioning: Frame::constant(3, 3, 0.0),
        action_prompt: "a".into(),
        duration_s: 1.0,
        fps: 4.0,
        seed: 0,
        step_index: 1,
        attempt_index: 1,
    };
    match generator.generate(&req) {
        Err(BackendError::Malformed(m)) => assert!(m.contains("opaque")),
        other => panic!("expected malformed error, got {other:?}"),
    }
}

#[test]
fn usage_metadata_overrides_profile_estimates() {
    let body = format!(
        r#"{{"usage": {{"input_tokens": 123, "output_tokens": 45}}, {}"#,
        PLANNER_BODY.trim_start().trim_start_matches('{')
    );
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let planner = HttpPlanner::new(endpoint(stub.url()));
    let metered = planner.plan(&planner_request()).unwrap();
    assert_eq!(metered.meta.input_tokens, 123);
    assert_eq!(metered.meta.output_tokens, 45);
}

/// The loop must behave identically under scripted backends and an HTTP
/// stub that replays the scripted outputs.
#[test]
fn engine_is_adapter_neutral_under_stub_replay() {
    let task = Task {
        task_id: "neutrality".into(),
        input_frame: Frame::constant(4, 4, 0.25),
        prompt: "do the thing".into(),
        n_max: 2,
        m_budget: 2,
        rng_seed: 5,
    };
    let cfg = EngineConfig {
        first_clip_seconds: 1.0,
        later_clip_seconds: 0.5,
        fps: 4.0,
        router_enabled: false,
        ..EngineConfig::default()
    };

    // Scripted reference run: step 1 rejects once then accepts; step 2
    // accepts and completes.
    let plans = vec![plan(1, "leg one", 1), plan(2, "leg two", 0)];
    let verdicts = vec![
        Verdict::reject(0.4, Confidence::High, "veered", "stay level"),
        Verdict::accept(Progress::Partial, Confidence::High, "ok"),
        Verdict::accept(Progress::Complete, Confidence::High, "done"),
    ];
    let planner = ScriptedPlanner::new(plans.clone());
    let verifier = ScriptedVerifier::new(verdicts.clone());
    let generator = IdentityGenerator;
    let scripted = BackendSet {
        planner: &planner,
        verifier: &verifier,
        generator: &generator,
        router: None,
    };
    let reference = run_collabvr(&task, &cfg, &scripted, "hash").unwrap();

    // Replay the same outputs over HTTP. Generator responses reproduce what
    // the identity generator returns for each recorded request.
    let plan_stub = StubServer::start(
        plans
            .iter()
            .map(|p| StubResponse::ok(serde_json::to_string(p).unwrap()))
            .collect(),
    );
    let verify_stub = StubServer::start(
        verdicts
            .iter()
            .map(|v| StubResponse::ok(serde_json::to_string(v).unwrap()))
            .collect(),
    );
    let gen_bodies: Vec<StubResponse> = reference
        .trace
        .events()
        .iter()
        .filter(|e| e.event_kind == collabvr::trace::EventKind::GeneratorCall)
        .map(|e| {
            let clip: Clip =
                serde_json::from_value(e.payload[collabvr::trace::payload::CLIP].clone()).unwrap();
            let frames: Vec<FrameRef> = clip.frames.into_iter().map(FrameRef::Frame).collect();
            StubResponse::ok(
                serde_json::json!({ "frames": frames, "fps": clip.fps }).to_string(),
            )
        })
        .collect();
    let gen_stub = StubServer::start(gen_bodies);

    let http_planner = HttpPlanner::new(endpoint(plan_stub.url()));
    let http_verifier = HttpVerifier::new(endpoint(verify_stub.url()));
    let http_generator = HttpGenerator::new(endpoint(gen_stub.url()));
    let http = BackendSet {
        planner: &http_planner,
        verifier: &http_verifier,
        generator: &http_generator,
        router: None,
    };
    let replayed = run_collabvr(&task, &cfg, &http, "hash").unwrap();

    assert_eq!(
        replayed.erased(),
        reference.erased(),
        "scripted and stub-replayed runs must produce identical erased traces"
    );
}

#[test]
fn raw_video_mode_sends_every_frame() {
    use collabvr::backends::http::VerifierVideoMode;
    let body = r#"{"verdict":"accept","action_executed":true,"progress":"partial","confidence":"high","reason":"ok","suggestion":""}"#;
    let stub = StubServer::start(vec![StubResponse::ok(body)]);
    let verifier =
        HttpVerifier::with_mode(endpoint(stub.url()), VerifierVideoMode::RawVideo);
    verifier.verify(&verifier_request(), &test_clip()).unwrap();
    let wire: serde_json::Value =
        serde_json::from_str(&stub.request_bodies().pop().unwrap()).unwrap();
    assert_eq!(wire["inputs"]["video"].as_array().unwrap().len(), 4, "all clip frames sent");
    assert!(wire["inputs"]["sampled_frames"].is_null());
}
