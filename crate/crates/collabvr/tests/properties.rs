//! Property tests: trace-format round-trips, history consistency, JSON
//! extraction, and prompt-evolution algebra over randomized instances.

use proptest::prelude::*;

use collabvr::backends::extract_json_object;
use collabvr::engine::evolve_prompt;
use collabvr::prompt;
use collabvr::trace::{EventKind, RunHeader, RunTrace, TraceEvent};
use collabvr::types::{
    Clip, Confidence, Frame, History, InjectedFault, PlanStep, Progress, RouterAction,
    RouterDecision, Verdict,
};

fn frame_strategy() -> impl Strategy<Value = Frame> {
    (1u32..6, 1u32..6).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0.0f64..=1.0, (w * h) as usize)
            .prop_map(move |pixels| Frame::new(w, h, pixels).unwrap())
    })
}

fn clip_strategy() -> impl Strategy<Value = Clip> {
    (
        frame_strategy(),
        1usize..6,
        any::<u64>(),
        1u32..5,
        1u32..5,
        proptest::option::of((0.0f64..=1.0, ".*")),
    )
        .prop_map(|(frame, len, seed, step, attempt, fault)| Clip {
            frames: vec![frame; len],
            fps: 16.0,
            action_prompt: "move right 2".into(),
            attempt_index: attempt,
            step_index: step,
            seed,
            fault: fault.map(|(onset, detail)| InjectedFault {
                kind: collabvr::types::FaultKind::WrongDirection,
                onset,
                detail,
            }),
        })
}

fn verdict_strategy() -> impl Strategy<Value = Verdict> {
    (any::<bool>(), 0.0f64..=1.0, ".{0,20}", ".{0,20}").prop_map(|(accept, gf, reason, sug)| {
        if accept {
            Verdict::accept(Progress::Partial, Confidence::Medium, reason)
        } else {
            Verdict::reject(gf, Confidence::High, reason, sug)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_round_trips(frame in frame_strategy()) {
        let json = serde_json::to_string(&frame).unwrap();
        let back: Frame = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn clip_round_trips(clip in clip_strategy()) {
        let json = serde_json::to_string(&clip).unwrap();
        let back: Clip = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, clip);
    }

    #[test]
    fn task_round_trips(frame in frame_strategy(), n_max in 1u32..5, m_budget in 1u32..5, seed in any::<u64>()) {
        let task = collabvr::types::Task {
            task_id: "t".into(),
            input_frame: frame,
            prompt: "go".into(),
            n_max,
            m_budget,
            rng_seed: seed,
        };
        task.validate().unwrap();
        let back: collabvr::types::Task =
            serde_json::from_str(&serde_json::to_string(&task).unwrap()).unwrap();
        prop_assert_eq!(back, task);
    }

    /// MAE over the parseable subset equals a direct brute-force mean of
    /// absolute differences.
    #[test]
    fn d1_mae_matches_brute_force(pairs in proptest::collection::vec((1i64..6, 1i64..6), 1..40)) {
        use collabvr::metrics::{agreement_d1, AnnotationRecord, AnnotationSet, Axis};
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, (h, m))| AnnotationRecord {
                item_id: format!("i{i}"),
                axis: Axis::D1,
                human: serde_json::json!(h),
                model: serde_json::json!(m),
            })
            .collect();
        let report = agreement_d1(&AnnotationSet { records }).unwrap();
        let brute: f64 =
            pairs.iter().map(|(h, m)| (h - m).abs() as f64).sum::<f64>() / pairs.len() as f64;
        prop_assert!((report.mae.unwrap() - brute).abs() < 1e-12);
        let exact = pairs.iter().filter(|(h, m)| h == m).count() as f64 / pairs.len() as f64;
        prop_assert!((report.exact_match - exact).abs() < 1e-12);
    }

    #[test]
    fn verdict_round_trips(verdict in verdict_strategy()) {
        let json = serde_json::to_string(&verdict).unwrap();
        let back: Verdict = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, verdict);
    }

    #[test]
    fn plan_and_router_round_trip(
        complete in any::<bool>(),
        est in 0u32..5,
        split in any::<bool>(),
    ) {
        let plan = PlanStep {
            step_index: 1,
            observation: "obs".into(),
            remaining_goal: "goal".into(),
            task_complete: complete,
            instruction: if complete { String::new() } else { "move up 2".into() },
            target_state: "state".into(),
            estimated_steps_remaining: est,
        };
        let back: PlanStep = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        prop_assert_eq!(back, plan);

        let decision = RouterDecision {
            action: if split { RouterAction::Split } else { RouterAction::Fallback },
            suggestion: "s".into(),
            reason: "r".into(),
            estimated_steps: split.then_some(3),
        };
        let back: RouterDecision =
            serde_json::from_str(&serde_json::to_string(&decision).unwrap()).unwrap();
        prop_assert_eq!(back, decision);
    }

    #[test]
    fn trace_round_trips_through_jsonl(
        kinds in proptest::collection::vec(0usize..8, 1..20),
        verdict in verdict_strategy(),
    ) {
        let all = [
            EventKind::PlannerCall,
            EventKind::GeneratorCall,
            EventKind::VerifierCall,
            EventKind::RouterCall,
            EventKind::Accept,
            EventKind::Reject,
            EventKind::Evolve,
            EventKind::Terminate,
        ];
        let mut trace = RunTrace::new(RunHeader {
            task_id: "prop".into(),
            config_hash: "h".into(),
            rng_seed: 9,
            started_at: 1,
        });
        for (i, k) in kinds.iter().enumerate() {
            let kind = all[*k];
            let mut event = TraceEvent::new(
                kind,
                i as i64,
                1,
                1,
                serde_json::json!({ "verdict": verdict }),
            );
            if kind == EventKind::GeneratorCall {
                event = event.with_vgm_seconds(1.5);
            }
            if matches!(kind, EventKind::PlannerCall | EventKind::VerifierCall | EventKind::RouterCall) {
                event = event.with_tokens(10, 2);
            }
            trace.append(event).unwrap();
        }
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let back = RunTrace::read_jsonl(&buf[..]).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn history_conditioning_tracks_last_accepted_clip(clips in proptest::collection::vec(clip_strategy(), 0..6)) {
        let input = Frame::constant(3, 3, 0.5);
        let mut history = History::new(input.clone());
        for clip in &clips {
            // History requires consistent dimensions only per clip; push as-is.
            history.push(clip.clone()).unwrap();
        }
        match clips.last() {
            None => prop_assert_eq!(history.conditioning_frame(), &input),
            Some(last) => prop_assert_eq!(history.conditioning_frame(), last.last_frame()),
        }
        prop_assert_eq!(history.len(), clips.len());
    }

    /// For any response with exactly one balanced top-level JSON object,
    /// extraction equals parsing that object directly.
    #[test]
    fn prose_padding_never_breaks_extraction(
        prefix in "[^{}]{0,40}",
        suffix in "[^{}]{0,40}",
        gf in 0.0f64..=1.0,
    ) {
        let verdict = Verdict::reject(gf, Confidence::High, "reason", "suggestion");
        let object = serde_json::to_string(&verdict).unwrap();
        let body = format!("{prefix}{object}{suffix}");
        let extracted = extract_json_object(&body).expect("extraction must succeed");
        let direct: serde_json::Value = serde_json::from_str(&object).unwrap();
        prop_assert_eq!(extracted, direct);
    }

    /// Folding is idempotent on identical suggestions and the latest
    /// suggestion always wins.
    #[test]
    fn evolution_keeps_base_and_latest_suggestion(
        base in "[^\\[\\]]{1,30}",
        s1 in "[^\\[\\]()]{1,20}",
        s2 in "[^\\[\\]()]{1,20}",
    ) {
        let d1 = Verdict::reject(0.2, Confidence::High, "", s1.clone());
        let d2 = Verdict::reject(0.2, Confidence::High, "", s2.clone());
        let (p1, _) = evolve_prompt(&base, &d1);
        let (p1_again, _) = evolve_prompt(&p1, &d1);
        prop_assert_eq!(&p1, &p1_again, "identical suggestions must not duplicate");

        let (p2, _) = evolve_prompt(&p1, &d2);
        prop_assert_eq!(prompt::base_of(&p2).trim_end(), base.trim_end());
        // Correction content is stored trimmed.
        prop_assert_eq!(prompt::correction_of(&p2), Some(s2.trim()));
    }
}
