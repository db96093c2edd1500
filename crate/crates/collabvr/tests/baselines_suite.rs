//! Baseline policies on the grid world: cost bookkeeping, selector
//! behavior, and matched-compute comparisons.

use collabvr::backends::scripted::ScriptedSelector;
use collabvr::baselines::{run_pass_k, run_single, run_tpo, PassKConfig, TpoConfig};
use collabvr::engine::EngineConfig;
use collabvr::seeding::{attempt_seed, derive_seed};
use collabvr::simworld::{
    generate_task, rule_score, task_from_record, Category, Difficulty, FaultConfig, SimBackends,
    TaskRecord,
};
use collabvr::trace::{payload, EventKind};
use collabvr::types::Task;

fn sim_task(seed: u64, difficulty: Difficulty) -> (collabvr::simworld::GridTask, Task) {
    let grid_task = generate_task(seed, difficulty);
    let rec = TaskRecord { task_id: format!("s{seed}"), rng_seed: seed, task: grid_task.clone() };
    (grid_task, task_from_record(&rec, 3, 3))
}

#[test]
fn single_inference_costs_one_first_clip() {
    let (grid_task, task) = (|| {
        for seed in 0..50u64 {
            let (g, t) = sim_task(derive_seed(21, seed), Difficulty::N1);
            if g.category == Category::Navigation {
                return (g, t);
            }
        }
        panic!("no n1 navigation task found");
    })();
    let sim = SimBackends::new(grid_task.clone(), FaultConfig::default());
    let cfg = EngineConfig::default();
    let result = run_single(&task, &cfg, &sim.generator, "h").unwrap();
    assert_eq!(result.clips_generated, 1);
    assert!((result.total_vgm_seconds - 6.0).abs() < 1e-9, "one 6 s clip");
    assert_eq!(rule_score(&result, &grid_task), 1, "clean single shot solves n1");
}

#[test]
fn single_inference_cannot_realize_multi_segment_tasks() {
    let mut solved = 0;
    let mut total = 0;
    for seed in 0..30u64 {
        let (grid_task, task) = sim_task(derive_seed(33, seed), Difficulty::N3);
        let sim = SimBackends::new(grid_task.clone(), FaultConfig::default());
        let result = run_single(&task, &EngineConfig::default(), &sim.generator, "h").unwrap();
        solved += rule_score(&result, &grid_task) as u32;
        total += 1;
    }
    assert_eq!(total, 30);
    assert_eq!(solved, 0, "a single straight-motion clip cannot take corners");
}

#[test]
fn pass_k_cost_columns_match_the_schedule() {
    let (grid_task, task) = sim_task(7, Difficulty::N1);
    let sim = SimBackends::new(grid_task, FaultConfig::default());
    let cfg = EngineConfig::default();
    for (k, expected) in [(2u32, 12.0f64), (4, 24.0)] {
        let result = run_pass_k(&task, &cfg, &sim.generator, &sim.selector, &PassKConfig::new(k), "h")
            .unwrap();
        assert_eq!(result.clips_generated, k);
        assert!(
            (result.total_vgm_seconds - expected).abs() < 1e-9,
            "pass@{k} must cost {expected} s, got {}",
            result.total_vgm_seconds
        );
    }
}

#[test]
fn oracle_selector_picks_the_clean_candidate() {
    // With a high deviation rate, find a seed where candidate quality
    // differs and check the chosen clip is a best-quality one.
    let faults = FaultConfig { p_wrong_direction: 0.6, ..Default::default() };
    let mut exercised = false;
    for seed in 0..60u64 {
        let (grid_task, task) = sim_task(derive_seed(55, seed), Difficulty::N1);
        if grid_task.category != Category::Navigation {
            continue;
        }
        let sim = SimBackends::new(grid_task.clone(), faults.clone());
        let result = run_pass_k(
            &task,
            &EngineConfig::default(),
            &sim.generator,
            &sim.selector,
            &PassKConfig::new(4),
            "h",
        )
        .unwrap();
        let chosen_ok = rule_score(&result, &grid_task) == 1;
        // Rebuild the candidates to know whether any was clean.
        let any_clean = result
            .trace
            .events()
            .iter()
            .filter(|e| e.event_kind == EventKind::GeneratorCall)
            .any(|e| e.payload[payload::CLIP]["fault"].is_null());
        if any_clean {
            assert!(chosen_ok, "seed {seed}: a clean candidate existed but was not chosen");
            exercised = true;
        }
    }
    assert!(exercised, "no seed exercised the mixed-candidate case");
}

#[test]
fn invalid_selector_index_falls_back_to_seed_one() {
    let (grid_task, task) = sim_task(3, Difficulty::N1);
    let sim = SimBackends::new(grid_task, FaultConfig::default());
    let selector = ScriptedSelector::new(vec![99]);
    let result = run_pass_k(
        &task,
        &EngineConfig::default(),
        &sim.generator,
        &selector,
        &PassKConfig::new(3),
        "h",
    )
    .unwrap();
    let selector_event = result
        .trace
        .events()
        .iter()
        .find(|e| e.payload[payload::ROLE] == payload::ROLE_SELECTOR)
        .unwrap();
    assert!(selector_event.payload[payload::WARNING].is_string());
    assert_eq!(result.final_video[0].seed, derive_seed(task.rng_seed, 1));
}

#[test]
fn tpo_defaults_cost_five_first_clips() {
    let (grid_task, task) = sim_task(11, Difficulty::N1);
    let sim = SimBackends::new(grid_task, FaultConfig::default());
    let result = run_tpo(
        &task,
        &EngineConfig::default(),
        &sim.generator,
        &sim.critic,
        &TpoConfig::default(),
        "h",
    )
    .unwrap();
    assert_eq!(result.clips_generated, 5);
    assert!((result.total_vgm_seconds - 30.0).abs() < 1e-9);
    // Two critic calls, one per rewrite iteration.
    let critic_calls = result
        .trace
        .events()
        .iter()
        .filter(|e| e.payload[payload::ROLE] == payload::ROLE_CRITIC)
        .count();
    assert_eq!(critic_calls, 2);
}

#[test]
fn noop_critic_reduces_to_a_single_final_draw() {
    let (grid_task, task) = sim_task(13, Difficulty::N1);
    let sim = SimBackends::new(grid_task, FaultConfig::default());
    let critic = collabvr::backends::scripted::NoOpCritic;
    let result = run_tpo(
        &task,
        &EngineConfig::default(),
        &sim.generator,
        &critic,
        &TpoConfig::default(),
        "h",
    )
    .unwrap();
    let final_clip = result.final_video.last().unwrap();
    assert_eq!(final_clip.seed, attempt_seed(task.rng_seed, 3, 1));
    assert_eq!(final_clip.action_prompt, task.prompt, "prompt unchanged by the no-op critic");
}

#[test]
fn best_of_k_success_is_monotone_in_k() {
    let faults = FaultConfig { p_wrong_direction: 0.3, ..Default::default() };
    let cfg = EngineConfig::default();
    let mut wins2 = 0u32;
    let mut wins4 = 0u32;
    let n = 200;
    for seed in 0..n {
        let (grid_task, task) = sim_task(derive_seed(77, seed), Difficulty::N1);
        let sim = SimBackends::new(grid_task.clone(), faults.clone());
        let r2 = run_pass_k(&task, &cfg, &sim.generator, &sim.selector, &PassKConfig::new(2), "h")
            .unwrap();
        let r4 = run_pass_k(&task, &cfg, &sim.generator, &sim.selector, &PassKConfig::new(4), "h")
            .unwrap();
        wins2 += rule_score(&r2, &grid_task) as u32;
        wins4 += rule_score(&r4, &grid_task) as u32;
    }
    assert!(
        wins4 >= wins2,
        "best-of-4 ({wins4}/{n}) must not lose to best-of-2 ({wins2}/{n})"
    );
    assert!(wins4 > 0);
}

#[test]
fn informed_critic_beats_noop_on_target_faults() {
    let faults = FaultConfig { p_wrong_target: 0.6, ..Default::default() };
    let cfg = EngineConfig::default();
    let tpo = TpoConfig::default();
    let mut informed = 0u32;
    let mut noop = 0u32;
    let mut pairs = 0u32;
    for seed in 0..250u64 {
        let grid_task = generate_task(derive_seed(909, seed), Difficulty::N1);
        if grid_task.category == Category::Navigation {
            continue;
        }
        let rec =
            TaskRecord { task_id: format!("c{seed}"), rng_seed: seed, task: grid_task.clone() };
        let task = task_from_record(&rec, 3, 3);
        let sim = SimBackends::new(grid_task.clone(), faults.clone());
        let with_critic =
            run_tpo(&task, &cfg, &sim.generator, &sim.critic, &tpo, "h").unwrap();
        let without = run_tpo(
            &task,
            &cfg,
            &sim.generator,
            &collabvr::backends::scripted::NoOpCritic,
            &tpo,
            "h",
        )
        .unwrap();
        informed += rule_score(&with_critic, &grid_task) as u32;
        noop += rule_score(&without, &grid_task) as u32;
        pairs += 1;
    }
    assert!(pairs >= 100, "need enough non-navigation tasks, got {pairs}");
    assert!(
        informed > noop,
        "informed critic ({informed}/{pairs}) must beat the no-op critic ({noop}/{pairs})"
    );
}
