//! End-to-end behavior of the synthetic generator, sessions and file IO.

mod common;

use common::benchmark_config;
use stackrefine_core::metrics::dice;
use stackrefine_core::pipeline::{generate_synthetic_stack, run_session, Schedule, SimulatedUser, SynthSpec};
use stackrefine_core::ugstack;
use stackrefine_core::uncertainty::{fuse_predictions, rank_slices, ScoreMode};
use stackrefine_core::RefineConfig;

#[test]
fn hard_slices_outscore_clean_slices() {
    let cfg = RefineConfig::default();
    let spec = SynthSpec::default();
    let mut separated = 0;
    for seed in 0..100 {
        let case = generate_synthetic_stack(&spec, seed).unwrap();
        let fused = fuse_predictions(&case.probs, cfg.threshold).unwrap();
        let queue = rank_slices(&fused, &cfg, ScoreMode::Normalized);
        let hard_min = case
            .hard_slices
            .iter()
            .map(|(k, _)| queue.score_of(*k).unwrap())
            .fold(f64::INFINITY, f64::min);
        let clean_max = (0..spec.num_slices)
            .filter(|k| !case.is_hard(*k))
            .map(|k| queue.score_of(k).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        separated += usize::from(hard_min > clean_max);
    }
    assert!(separated >= 95, "hard slices ranked above all clean slices in {separated}/100 seeds");
}

#[test]
fn simulated_user_edits_exactly_the_corrupted_slices() {
    let cfg = benchmark_config();
    for seed in 0..10 {
        let case = generate_synthetic_stack(&SynthSpec::default(), seed).unwrap();
        let mut user = SimulatedUser::new(case.gt.clone());
        let out = run_session(&case.stack, &case.probs, &mut user, &cfg, Schedule::default()).unwrap();
        let hard: Vec<usize> = case.hard_slices.iter().map(|(k, _)| *k).collect();
        assert_eq!(out.log.edited(), hard, "seed {seed}");
        let before = dice(out.initial.data(), case.gt.data()).unwrap();
        let after = dice(out.mask.data(), case.gt.data()).unwrap();
        assert!(after > before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn sessions_never_lower_stack_dice() {
    let cfg = RefineConfig::default();
    let spec = SynthSpec {
        num_hard: 4,
        ..Default::default()
    };
    for seed in 0..10 {
        let case = generate_synthetic_stack(&spec, 40 + seed).unwrap();
        for schedule in [Schedule::default(), Schedule::Guided(ScoreMode::Naive), Schedule::Exhaustive] {
            let mut user = SimulatedUser::new(case.gt.clone());
            let out = run_session(&case.stack, &case.probs, &mut user, &cfg, schedule).unwrap();
            let before = dice(out.initial.data(), case.gt.data()).unwrap();
            let after = dice(out.mask.data(), case.gt.data()).unwrap();
            assert!(after >= before, "seed {seed} {schedule:?}: {before} -> {after}");
        }
    }
}

#[test]
fn synthetic_case_survives_files() {
    let dir = tempfile::tempdir().unwrap();
    let case = generate_synthetic_stack(&SynthSpec::default(), 9).unwrap();
    let spacing = (case.stack.slice_spacing(), case.stack.pixel_spacing().0, case.stack.pixel_spacing().1);
    ugstack::write_stack(&case.stack, &dir.path().join("image")).unwrap();
    ugstack::write_probability_group(&case.probs, spacing, &dir.path().join("probs")).unwrap();
    ugstack::write_mask(&case.gt, spacing, &dir.path().join("gt")).unwrap();
    assert_eq!(ugstack::read_stack(&dir.path().join("image.json")).unwrap(), case.stack);
    assert_eq!(ugstack::read_probability_group(&dir.path().join("probs.raw")).unwrap(), case.probs);
    assert_eq!(ugstack::read_mask(&dir.path().join("gt")).unwrap(), case.gt);
}
