//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::{s, Array2, Array4, ArrayView2, Axis};
use rand::Rng;

use common::{
    assd_oracle, benchmark_config, chamfer, count_dice, disk, naive_fusion, random_image, random_shape,
    relaxation_oracle, rng, soft_probability,
};
use stackrefine_core::geodesic::{geodesic_distance, likelihood_from_scribbles};
use stackrefine_core::levelset::{band_gradient_mean, energy, evolve, extract_mask, init_phi, LevelSetField};
use stackrefine_core::metrics::{assd, dice, rve, sweep_ueo_threshold, ueo, UeoCase};
use stackrefine_core::pipeline::{
    generate_synthetic_stack, replay_session, run_session, simulate_scribbles, Schedule, SessionLog, SimulatedUser,
    SynthSpec, MIN_COMPONENT,
};
use stackrefine_core::refine::{refine_slice, Refinement};
use stackrefine_core::scribble::{rasterize_scribbles, Rasterized};
use stackrefine_core::uncertainty::{fuse_predictions, rank_slices, ScoreMode};
use stackrefine_core::{ProbabilityGroup, RefineConfig};

type Verdict = (bool, String);

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("fusion oracle", fusion_oracle),
        ("geodesic exactness", geodesic_exactness),
        ("likelihood contract", likelihood_contract),
        ("level-set energy descent", levelset_suite),
        ("scribble guarantee", scribble_guarantee),
        ("refinement efficacy", refinement_efficacy),
        ("guidance efficacy", guidance_efficacy),
        ("metrics identities", metrics_identities),
        ("determinism and replay", determinism_replay),
        ("performance envelope", performance_envelope),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fusion_oracle() -> Verdict {
    let mut r = rng(1);
    let groups: Vec<ProbabilityGroup> = (0..100)
        .map(|_| ProbabilityGroup::new(Array4::from_shape_fn((4, 1, 16, 16), |_| r.random::<f32>())).unwrap())
        .collect();
    let t = Instant::now();
    let fused: Vec<_> = groups.iter().map(|g| fuse_predictions(g, 0.5).unwrap()).collect();
    let seconds = t.elapsed().as_secs_f64();
    let mut err: f64 = 0.0;
    let mut mask_ok = true;
    for (g, f) in groups.iter().zip(&fused) {
        let (mean, var) = naive_fusion(g.data());
        err = err.max(max_abs_diff(&mean, &f.mean)).max(max_abs_diff(&var, &f.variance));
        mask_ok &= mean.iter().zip(f.mask.data().iter()).all(|(m, y)| (*m >= 0.5) == (*y == 1));
    }
    (
        err <= 1e-7 && mask_ok && seconds < 1.0,
        format!("100 groups 4x16x16, max abs error {err:.2e} (<= 1e-7), masks agree {mask_ok}, {seconds:.3} s (< 1 s)"),
    )
}

fn random_seeds(r: &mut impl Rng, dim: (usize, usize), count: usize) -> Vec<(usize, usize)> {
    (0..count).map(|_| (r.random_range(0..dim.0), r.random_range(0..dim.1))).collect()
}

fn geodesic_exactness() -> Verdict {
    let mut r = rng(2);
    let dim = (32, 32);
    let mut err: f64 = 0.0;
    for _ in 0..50 {
        let image = random_image(&mut r, dim);
        let n = r.random_range(1..=4);
        let seeds = random_seeds(&mut r, dim, n);
        for gamma in [0.0, 1.0, 5.0] {
            let d = geodesic_distance(image.view(), &seeds, gamma).unwrap();
            let oracle = relaxation_oracle(image.view(), &seeds, gamma);
            err = err.max(max_abs_diff(&d.values, &oracle));
        }
    }
    // constant image: every distance is the 8-connected chamfer distance
    let flat = Array2::from_elem(dim, 0.3);
    let mut chamfer_err: f64 = 0.0;
    for seeds in [vec![(0, 0)], vec![(5, 20), (31, 2)], random_seeds(&mut r, dim, 3)] {
        let d = geodesic_distance(flat.view(), &seeds, 1.0).unwrap();
        for (p, v) in d.values.indexed_iter() {
            let expect = seeds.iter().map(|&s| chamfer(s, p)).fold(f64::INFINITY, f64::min);
            chamfer_err = chamfer_err.max((v - expect).abs());
        }
    }
    let corner = geodesic_distance(flat.view(), &[(0, 0)], 1.0).unwrap().values[[3, 4]];
    let corner_ok = (corner - (3.0 * 2f64.sqrt() + 1.0)).abs() <= 1e-12;
    (
        err <= 1e-6 && chamfer_err <= 1e-12 && corner_ok,
        format!(
            "150 comparisons on 32x32 images with gamma in {{0, 1, 5}}, max abs error {err:.2e} (<= 1e-6); \
             constant-image chamfer max error {chamfer_err:.2e}; (0,0)->(3,4) = {corner:.6}"
        ),
    )
}

fn random_scribbles(r: &mut impl Rng, dim: (usize, usize), nf: usize, nb: usize) -> Rasterized {
    let mut taken = std::collections::HashSet::new();
    let mut pick = |r: &mut dyn rand::RngCore, n: usize| {
        let mut out = Vec::new();
        while out.len() < n {
            let p = (r.random_range(0..dim.0), r.random_range(0..dim.1));
            if taken.insert(p) {
                out.push(p);
            }
        }
        out
    };
    let foreground = pick(r, nf);
    let background = pick(r, nb);
    Rasterized { foreground, background }
}

fn likelihood_contract() -> Verdict {
    let mut r = rng(3);
    let dim = (32, 32);
    let d = RefineConfig::default().d;
    let lo = 1.0 / (1.0 + d.exp());
    let hi = d.exp() / (1.0 + d.exp());
    let (mut in_bounds, mut neutral, mut swap_err) = (true, true, 0.0f64);
    for i in 0..50 {
        let image = random_image(&mut r, dim);
        let gamma = [0.0, 1.0, 5.0][i % 3];
        let (nf, nb) = (r.random_range(0..6), r.random_range(0..6));
        let set = random_scribbles(&mut r, dim, nf, nb);
        let eta = likelihood_from_scribbles(image.view(), &set, gamma, d).unwrap().eta;
        in_bounds &= eta.iter().all(|&v| (lo..=hi).contains(&v));
        let swapped = Rasterized {
            foreground: set.background.clone(),
            background: set.foreground.clone(),
        };
        let eta2 = likelihood_from_scribbles(image.view(), &swapped, gamma, d).unwrap().eta;
        swap_err = swap_err.max(eta.iter().zip(eta2.iter()).map(|(a, b)| (a + b - 1.0).abs()).fold(0.0, f64::max));
        let empty = likelihood_from_scribbles(image.view(), &Rasterized::default(), gamma, d).unwrap().eta;
        neutral &= empty.iter().all(|&v| v == 0.5);
    }
    (
        in_bounds && neutral && swap_err <= 1e-12,
        format!(
            "50 random scribble sets: bounds [{lo:.6}, {hi:.6}] held {in_bounds}; empty sets give exactly 0.5 {neutral}; \
             F/B swap max |eta + eta' - 1| {swap_err:.2e} (<= 1e-12)"
        ),
    )
}

/// One run of the level-set suite.
struct SuiteRun {
    label: String,
    energy_before: f64,
    energy_after: f64,
    band_gradient: Option<f64>,
    seconds: f64,
    dice_before: f64,
    dice_after: f64,
    scribbled: bool,
}

fn unscribbled_run(label: String, prob: Array2<f64>, init: Array2<u8>, gt: ArrayView2<'_, u8>) -> SuiteRun {
    let cfg = benchmark_config();
    let t = Instant::now();
    let eta = Array2::from_elem(prob.dim(), 0.5);
    let phi0 = init_phi(init.view());
    let before = energy(phi0.phi.view(), prob.view(), eta.view(), &cfg).unwrap();
    let phi = evolve(&phi0, prob.view(), eta.view(), &Rasterized::default(), &cfg).unwrap();
    let after = energy(phi.phi.view(), prob.view(), eta.view(), &cfg).unwrap();
    let seconds = t.elapsed().as_secs_f64();
    SuiteRun {
        label,
        energy_before: before.e_total,
        energy_after: after.e_total,
        band_gradient: band_gradient_mean(phi.phi.view(), 3.0 * cfg.epsilon),
        seconds,
        dice_before: dice(init.view(), gt).unwrap(),
        dice_after: dice(extract_mask(&phi).view(), gt).unwrap(),
        scribbled: false,
    }
}

/// Refinement of a corrupted synthetic slice with simulated scribbles.
struct ScribbledSlice {
    refinement: Refinement,
    constraints: Rasterized,
    dice_before: f64,
    dice_after: f64,
    seconds: f64,
}

fn scribbled_slices(seeds: std::ops::Range<u64>, per_stack: usize) -> Vec<ScribbledSlice> {
    let cfg = benchmark_config();
    let spec = SynthSpec::default();
    let mut out = Vec::new();
    for seed in seeds {
        let case = generate_synthetic_stack(&spec, seed).unwrap();
        let fused = fuse_predictions(&case.probs, cfg.threshold).unwrap();
        for &(k, _) in case.hard_slices.iter().take(per_stack) {
            let pred = fused.mask.slice(k);
            let gt = case.gt.slice(k);
            let set = simulate_scribbles(pred, gt, MIN_COMPONENT, k).unwrap();
            if set.is_empty() {
                continue;
            }
            let (h, w) = pred.dim();
            let t = Instant::now();
            let intensity = case.stack.normalized_slice(k);
            let refinement =
                refine_slice(intensity.view(), fused.mean.index_axis(Axis(0), k), pred, &set, &cfg).unwrap();
            let seconds = t.elapsed().as_secs_f64();
            out.push(ScribbledSlice {
                dice_before: dice(pred, gt).unwrap(),
                dice_after: dice(refinement.mask.view(), gt).unwrap(),
                constraints: rasterize_scribbles(&set, h, w).unwrap(),
                refinement,
                seconds,
            });
        }
    }
    out
}

fn levelset_runs() -> Vec<SuiteRun> {
    let dim = (64, 64);
    let mut runs = Vec::new();
    let shifts = [(3.0, 0.0), (0.0, 3.0), (2.0, 2.0), (-3.0, 1.0), (1.0, -3.0)];
    for (i, (radius, shift)) in [12.0, 14.0, 15.0, 16.0, 18.0].into_iter().zip(shifts).enumerate() {
        let gt = disk(dim, (32.0, 32.0), radius);
        let init = disk(dim, (32.0 + shift.0, 32.0 + shift.1), radius);
        runs.push(unscribbled_run(format!("shifted disk {i}"), gt.mapv(f64::from), init, gt.view()));
    }
    for (i, (radius, side)) in [(13.0, 5), (15.0, 6), (16.0, 7), (18.0, 6), (20.0, 5)].into_iter().enumerate() {
        let gt = disk(dim, (32.0, 32.0), radius);
        let mut init = gt.clone();
        let top = (32.0 - radius) as usize;
        let left = 32 - side / 2;
        init.slice_mut(s![top..top + side, left..left + side]).fill(0);
        runs.push(unscribbled_run(format!("notched disk {i}"), soft_probability(gt.view()), init, gt.view()));
    }
    for (i, (radius, bump)) in [(13.0, 5.0), (15.0, 6.0), (16.0, 4.0), (18.0, 5.0), (20.0, 6.0)].into_iter().enumerate() {
        let gt = disk(dim, (32.0, 32.0), radius);
        let init = &gt | &disk(dim, (32.0 + radius, 32.0), bump);
        runs.push(unscribbled_run(format!("over-segmented disk {i}"), soft_probability(gt.view()), init, gt.view()));
    }
    let cfg = benchmark_config();
    for (i, s) in scribbled_slices(0..5, 1).into_iter().enumerate() {
        runs.push(SuiteRun {
            label: format!("scribbled synthetic slice {i}"),
            energy_before: s.refinement.stats.energy_before.e_total,
            energy_after: s.refinement.stats.energy_after.e_total,
            band_gradient: band_gradient_mean(s.refinement.phi.phi.view(), 3.0 * cfg.epsilon),
            seconds: s.seconds,
            dice_before: s.dice_before,
            dice_after: s.dice_after,
            scribbled: true,
        });
    }
    runs
}

fn levelset_suite() -> Verdict {
    let runs = levelset_runs();
    let descended = runs.iter().filter(|r| r.energy_after < r.energy_before).count();
    let banded = runs
        .iter()
        .filter(|r| r.band_gradient.is_some_and(|g| (0.8..=1.2).contains(&g)))
        .count();
    let fast = runs.iter().filter(|r| r.seconds < 0.5).count();
    let (gmin, gmax) = runs
        .iter()
        .filter_map(|r| r.band_gradient)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| (a.min(g), b.max(g)));
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let failures: Vec<&str> = runs
        .iter()
        .filter(|r| {
            !(r.energy_after < r.energy_before
                && r.band_gradient.is_some_and(|g| (0.8..=1.2).contains(&g))
                && r.seconds < 0.5)
        })
        .map(|r| r.label.as_str())
        .collect();
    let n = runs.len();
    (
        n == 20 && descended == n && banded == n && fast == n,
        format!(
            "{n} cases: energy descended {descended}/{n}; band mean |grad phi| in [0.8, 1.2] {banded}/{n} \
             (range {gmin:.3}..{gmax:.3}); under 0.5 s {fast}/{n} (slowest {slowest:.3} s){}",
            if failures.is_empty() { String::new() } else { format!("; failing: {failures:?}") }
        ),
    )
}

fn constraints_hold(phi: &LevelSetField, c: &Rasterized) -> bool {
    c.foreground.iter().all(|&p| phi.phi[p] > 0.0) && c.background.iter().all(|&p| phi.phi[p] <= 0.0)
}

fn scribble_guarantee() -> Verdict {
    let synthetic = scribbled_slices(0..30, 2);
    let synthetic_ok = synthetic
        .iter()
        .filter(|s| constraints_hold(&s.refinement.phi, &s.constraints))
        .count();

    // adversarial: random scribbles that contradict the probability map
    let cfg = RefineConfig::default();
    let mut r = rng(4);
    let dim = (48, 48);
    let mut adversarial_ok = 0;
    for _ in 0..20 {
        let mask = random_shape(&mut r, dim);
        let prob = soft_probability(mask.view());
        let image = random_image(&mut r, dim);
        let (nf, nb) = (r.random_range(1..30), r.random_range(1..30));
        let set = random_scribbles(&mut r, dim, nf, nb);
        let eta = likelihood_from_scribbles(image.view(), &set, cfg.gamma, cfg.d).unwrap().eta;
        let phi = evolve(&init_phi(mask.view()), prob.view(), eta.view(), &set, &cfg).unwrap();
        adversarial_ok += usize::from(constraints_hold(&phi, &set));
    }
    let n = synthetic.len();
    (
        synthetic_ok == n && adversarial_ok == 20,
        format!(
            "F inside and B outside exactly in {synthetic_ok}/{n} simulated-scribble refinements \
             and {adversarial_ok}/20 adversarial random scribble sets"
        ),
    )
}

fn refinement_efficacy() -> Verdict {
    let cfg = RefineConfig::default();
    let dim = (64, 64);
    let target = disk(dim, (32.0, 32.0), 15.0);
    let shifted = disk(dim, (32.0, 35.0), 15.0);
    let prob = target.mapv(f64::from);
    let eta = Array2::from_elem(dim, 0.5);
    let phi = evolve(&init_phi(shifted.view()), prob.view(), eta.view(), &Rasterized::default(), &cfg).unwrap();
    let disk_dice = dice(extract_mask(&phi).view(), target.view()).unwrap();

    let suite: Vec<SuiteRun> = levelset_runs().into_iter().filter(|r| r.scribbled).collect();
    let suite_improved = suite.iter().filter(|r| r.dice_after > r.dice_before).count();
    let broad = scribbled_slices(100..150, 2);
    let broad_improved = broad.iter().filter(|s| s.dice_after > s.dice_before).count();
    let total = suite.len() + broad.len();
    let improved = suite_improved + broad_improved;
    let rate = improved as f64 / total as f64;
    let gain = broad.iter().map(|s| s.dice_after - s.dice_before).sum::<f64>() / broad.len() as f64;
    (
        disk_dice >= 0.95 && rate >= 0.95,
        format!(
            "3-px shifted disk Dice {disk_dice:.4} (>= 0.95); refined Dice > initial in {improved}/{total} \
             scribbled slices ({:.1}% >= 95%, mean gain {gain:.4}, gamma {})",
            100.0 * rate,
            benchmark_config().gamma
        ),
    )
}

fn guidance_efficacy() -> Verdict {
    let cfg = benchmark_config();
    let spec = SynthSpec::default();
    let mut good = 0;
    let mut fetched_total = 0;
    for seed in 0..100 {
        let case = generate_synthetic_stack(&spec, seed).unwrap();
        let mut user = SimulatedUser::new(case.gt.clone());
        let guided = run_session(&case.stack, &case.probs, &mut user, &cfg, Schedule::default()).unwrap();
        let mut user = SimulatedUser::new(case.gt.clone());
        let exhaustive = run_session(&case.stack, &case.probs, &mut user, &cfg, Schedule::Exhaustive).unwrap();
        let dg = dice(guided.mask.data(), case.gt.data()).unwrap();
        let de = dice(exhaustive.mask.data(), case.gt.data()).unwrap();
        let fetched = guided.log.fetched().len();
        fetched_total += fetched;
        if dg >= de - 0.005 && fetched as f64 <= 0.6 * spec.num_slices as f64 {
            good += 1;
        }
    }

    // small corrupted target among large targets with wide uncertain rims
    let small = SynthSpec {
        semi_axis: (16.0, 22.0),
        boundary_noise: 1.0,
        hard_slices: Some(vec![4]),
        small_slices: vec![4],
        ..Default::default()
    };
    let mut later = 0;
    let trials = 20;
    for seed in 0..trials {
        let case = generate_synthetic_stack(&small, seed).unwrap();
        let position = |mode| {
            let mut user = SimulatedUser::new(case.gt.clone());
            let out = run_session(&case.stack, &case.probs, &mut user, &cfg, Schedule::Guided(mode)).unwrap();
            out.log.fetched().iter().position(|&k| k == 4).unwrap_or(usize::MAX)
        };
        if position(ScoreMode::Naive) > position(ScoreMode::Normalized) {
            later += 1;
        }
    }
    (
        good >= 90 && later == trials,
        format!(
            "guided review within 0.005 Dice of exhaustive with <= 60% fetched in {good}/100 stacks (>= 90), \
             mean {:.2} of 10 slices fetched; naive scores fetch the corrupted small target later in {later}/{trials} scenarios",
            fetched_total as f64 / 100.0
        ),
    )
}

fn metrics_identities() -> Verdict {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let dim = (16, 16);
    let a = disk(dim, (8.0, 8.0), 4.0);
    let empty = Array2::<u8>::zeros(dim);
    let mut left = empty.clone();
    left.slice_mut(s![0..4, 0..4]).fill(1);
    let mut right = empty.clone();
    right.slice_mut(s![10..14, 10..14]).fill(1);
    let mut block = empty.clone();
    block.slice_mut(s![2..4, 2..4]).fill(1);
    let mut wide = empty.clone();
    wide.slice_mut(s![2..4, 2..6]).fill(1);

    check(dice(a.view(), a.view()).unwrap() == 1.0, "dice identical");
    check(dice(left.view(), right.view()).unwrap() == 0.0, "dice disjoint");
    check(dice(block.view(), wide.view()).unwrap() == 2.0 / 3.0, "dice 2x2 in 2x4");
    check(dice(empty.view(), empty.view()).unwrap() == 1.0, "dice both empty");

    check(assd(a.view(), a.view(), (1.0, 1.0)).unwrap() == 0.0, "assd identical");
    let (mut p, mut q) = (empty.clone(), empty.clone());
    p[[3, 3]] = 1;
    q[[3, 8]] = 1;
    check(assd(p.view(), q.view(), (1.0, 1.0)).unwrap() == 5.0, "assd single pixels");
    check(assd(empty.view(), a.view(), (1.0, 1.0)).is_err(), "assd empty");
    let big = (24, 24);
    let mut inner = Array2::<u8>::zeros(big);
    inner.slice_mut(s![7..17, 7..17]).fill(1);
    let mut outer = Array2::<u8>::zeros(big);
    outer.slice_mut(s![5..19, 5..19]).fill(1);
    let squares = assd(inner.view(), outer.view(), (1.0, 1.0)).unwrap();
    check((squares - assd_oracle(inner.view(), outer.view(), (1.0, 1.0))).abs() <= 1e-9, "assd squares");

    let mut r = rng(5);
    let mut assd_err: f64 = 0.0;
    for i in 0..20 {
        let x = random_shape(&mut r, (32, 32));
        let y = random_shape(&mut r, (32, 32));
        let spacing = if i % 2 == 0 { (1.0, 1.0) } else { (0.8, 1.3) };
        let v = assd(x.view(), y.view(), spacing).unwrap();
        assd_err = assd_err.max((v - assd_oracle(x.view(), y.view(), spacing)).abs());
    }
    check(assd_err <= 1e-9, "assd random shapes");

    let err = &a ^ &wide;
    let u_exact = err.mapv(|v| if v == 1 { 0.9 } else { 0.1 });
    check(ueo(u_exact.view(), a.view(), wide.view(), 0.5).unwrap() == 1.0, "ueo exact");
    let zero = Array2::<f64>::zeros(dim);
    check(ueo(zero.view(), a.view(), wide.view(), 0.5).unwrap() == 0.0, "ueo zero");
    let (mut ueo_err, mut rve_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let u = random_image(&mut r, dim);
        let pred = Array2::from_shape_fn(dim, |_| r.random_range(0..2u8));
        let gt = Array2::from_shape_fn(dim, |_| r.random_range(0..2u8));
        let t: f64 = r.random_range(0.2..0.8);
        let unc = u.mapv(|v| u8::from(v >= t));
        let errs = Array2::from_shape_fn(dim, |i| u8::from(pred[i] != gt[i]));
        ueo_err = ueo_err.max((ueo(u.view(), pred.view(), gt.view(), t).unwrap() - count_dice(unc.view(), errs.view())).abs());
        let nu = unc.iter().filter(|&&v| v == 1).count() as f64;
        let ne = errs.iter().filter(|&&v| v == 1).count() as f64;
        rve_err = rve_err.max((rve(u.view(), pred.view(), gt.view(), t).unwrap() - (nu - ne).abs() / ne).abs());
    }
    check(ueo_err <= 1e-9, "ueo random");
    check(rve_err <= 1e-9, "rve random");
    check(rve(u_exact.view(), a.view(), wide.view(), 0.5).unwrap() == 0.0, "rve equal size");
    // uncertain region: the error region plus as many other pixels
    let n_err = err.iter().filter(|&&v| v == 1).count();
    let mut doubled = u_exact.clone();
    let mut extra = 0;
    for (v, e) in doubled.iter_mut().zip(err.iter()) {
        if *e == 0 && extra < n_err {
            *v = 0.9;
            extra += 1;
        }
    }
    check(rve(doubled.view(), a.view(), wide.view(), 0.5).unwrap() == 1.0, "rve double");
    check(rve(u_exact.view(), a.view(), a.view(), 0.5).is_err(), "rve empty error region");

    // sweep
    let graded = err.mapv(|v| if v == 1 { 0.6 } else { 0.2 });
    let case = UeoCase {
        uncertainty: graded.view(),
        pred: a.view(),
        gt: wide.view(),
    };
    let (t, m) = sweep_ueo_threshold(&[case], &[0.1, 0.3, 0.5, 0.7]).unwrap();
    check(t == 0.3 && m == 1.0, "sweep exact threshold");
    check(sweep_ueo_threshold(&[case], &[0.42]).unwrap().0 == 0.42, "sweep single grid");
    let u2 = random_image(&mut r, dim);
    let g2 = random_shape(&mut r, dim);
    let cases = [
        case,
        UeoCase {
            uncertainty: u2.view(),
            pred: a.view(),
            gt: g2.view(),
        },
    ];
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &t in &grid {
        let mean = cases
            .iter()
            .map(|c| ueo(c.uncertainty, c.pred, c.gt, t).unwrap())
            .sum::<f64>()
            / 2.0;
        if mean > best.1 {
            best = (t, mean);
        }
    }
    let swept = sweep_ueo_threshold(&cases, &grid).unwrap();
    check(swept.0 == best.0 && (swept.1 - best.1).abs() <= 1e-9, "sweep exhaustive");

    let ok = failures.is_empty();
    (
        ok,
        format!(
            "dice, assd, ueo, rve and sweep examples; assd oracle on 20 random shapes max error {assd_err:.2e}, \
             ueo {ueo_err:.2e}, rve {rve_err:.2e} (<= 1e-9){}",
            if ok { String::new() } else { format!("; failing: {failures:?}") }
        ),
    )
}

fn determinism_replay() -> Verdict {
    let cfg = benchmark_config();
    let spec = SynthSpec::default();
    let (mut identical, mut replayed, mut edited) = (0, 0, 0);
    let runs = 10;
    for seed in 0..runs {
        let case = generate_synthetic_stack(&spec, 500 + seed).unwrap();
        let schedule = if seed % 2 == 0 { Schedule::default() } else { Schedule::Exhaustive };
        let mut user = SimulatedUser::new(case.gt.clone());
        let first = run_session(&case.stack, &case.probs, &mut user, &cfg, schedule).unwrap();
        let mut user = SimulatedUser::new(case.gt.clone());
        let second = run_session(&case.stack, &case.probs, &mut user, &cfg, schedule).unwrap();
        identical += usize::from(first.log.events == second.log.events && first.mask == second.mask);
        edited += usize::from(!first.log.edited().is_empty());
        let exported = SessionLog::from_json(&first.log.to_json()).unwrap();
        let mask = replay_session(&case.stack, &case.probs, &exported).unwrap();
        replayed += usize::from(mask.data() == first.mask.data());
    }
    (
        identical == runs as usize && replayed == runs as usize,
        format!(
            "{runs} sessions ({edited} with edits): repeated runs identical {identical}/{runs}; \
             exported logs replay to bit-identical masks {replayed}/{runs}"
        ),
    )
}

fn performance_envelope() -> Verdict {
    let cfg = RefineConfig::default();
    let dim = (256, 256);
    let target = disk(dim, (128.0, 128.0), 80.0);
    let start = disk(dim, (128.0, 134.0), 80.0);
    let prob = target.mapv(f64::from);
    let eta = Array2::from_elem(dim, 0.5);
    let phi0 = init_phi(start.view());
    let mut evolve_seconds: f64 = 0.0;
    for _ in 0..3 {
        let t = Instant::now();
        evolve(&phi0, prob.view(), eta.view(), &Rasterized::default(), &cfg).unwrap();
        evolve_seconds = evolve_seconds.max(t.elapsed().as_secs_f64());
    }

    let mut r = rng(6);
    let probs = ProbabilityGroup::new(Array4::from_shape_fn((4, 20, 256, 256), |_| r.random::<f32>())).unwrap();
    let mut fuse_seconds: f64 = 0.0;
    for _ in 0..3 {
        let t = Instant::now();
        let fused = fuse_predictions(&probs, cfg.threshold).unwrap();
        let queue = rank_slices(&fused, &cfg, ScoreMode::Normalized);
        assert_eq!(queue.entries.len(), 20);
        fuse_seconds = fuse_seconds.max(t.elapsed().as_secs_f64());
    }
    (
        evolve_seconds < 1.0 && fuse_seconds < 0.5,
        format!(
            "256x256 x 200 steps on one thread {evolve_seconds:.3} s (< 1 s); fuse+rank 4x20x256x256 \
             {fuse_seconds:.3} s (< 0.5 s); slowest of 3 runs each"
        ),
    )
}
