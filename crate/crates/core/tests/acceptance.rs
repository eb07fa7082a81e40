//! Acceptance suite: one test per exit criterion, each printing a pass line
//! with the measured quantities. Tolerances and runtime caps are pinned
//! here, not configurable.

use std::rc::Rc;
use std::time::Instant;

use scale_calculus::problems::{
    acceptance_instance, derivative_loss_probe, make_elliptic_operator, make_perturbed_burgers,
    reduction_fixture, stress_instance, uniform_continuity_failure_experiment, SEPARATION_FLOOR,
};
use scale_calculus::reduction::finite_dim_reduction;
use scale_calculus::smoothing::{default_t_grid, verify_smoothing_family, SmoothingFamily};
use scale_calculus::solver::{
    fit_decay, injectivity_probe, plain_newton, residual_recursion_check, solve,
    superlinearity_check, SolveStatus, Smoother,
};
use scale_calculus::{
    analyze_fredholm, bandwidth_stability, index_additivity_check, index_invariance_experiment,
    random_strongly_smoothing, weight, GradedOperator, GradedVector, Result,
};

const RANK_TOL: f64 = 1e-8;

fn catalog(bandwidth: usize) -> Vec<(&'static str, GradedOperator)> {
    vec![
        ("d/dtheta", GradedOperator::differentiation(bandwidth)),
        (
            "-d2-1",
            make_elliptic_operator(&GradedVector::constant(bandwidth, -1.0)).unwrap(),
        ),
        (
            "-d2+1",
            make_elliptic_operator(&GradedVector::constant(bandwidth, 1.0)).unwrap(),
        ),
    ]
}

#[test]
fn criterion_01_smoothing_axioms() {
    let start = Instant::now();
    let family = SmoothingFamily::sharp();
    let bandwidth = 128;
    let grid = default_t_grid(bandwidth, 64);
    assert!((grid.last().unwrap() - weight(128).ln()).abs() < 2e-6);
    let report = verify_smoothing_family(&family, bandwidth, 6, &grid, 200, 20_240_501);
    let cap = 1.0 + 1e-12;
    assert!(
        report.worst_ratio_ineq1 <= cap,
        "inequality 1 ratio {}",
        report.worst_ratio_ineq1
    );
    assert!(
        report.worst_ratio_ineq2 <= cap,
        "inequality 2 ratio {}",
        report.worst_ratio_ineq2
    );
    assert!(report.pass);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 30.0, "runtime {elapsed:.1}s exceeds 30s");
    println!(
        "criterion 01 PASS: smoothing axioms hold with p = 0, C = 1 (worst ratios {:.3e}, {:.3e}; {} t-values, {:.1}s)",
        report.worst_ratio_ineq1, report.worst_ratio_ineq2, report.t_count, elapsed
    );
}

#[test]
fn criterion_02_fredholm_catalog() {
    let start = Instant::now();
    let expected = [(1usize, 1usize, 0i64), (2, 2, 0), (0, 0, 0)];
    for bandwidth in [32usize, 64] {
        for ((name, op), want) in catalog(bandwidth).into_iter().zip(expected.iter()) {
            let rep = analyze_fredholm(&op, RANK_TOL).unwrap();
            assert_eq!(
                (rep.dim_ker, rep.dim_coker, rep.index),
                *want,
                "{name} at N = {bandwidth}"
            );
            assert!(
                rep.gap_ratio >= 1e3,
                "{name} at N = {bandwidth}: gap {}",
                rep.gap_ratio
            );
        }
    }
    // bandwidth stability as an explicit recheck of the doubling 32 -> 64
    type Builder = Box<dyn Fn(usize) -> Result<GradedOperator>>;
    let builders: Vec<(&str, Builder)> = vec![
        ("d/dtheta", Box::new(|n| Ok(GradedOperator::differentiation(n)))),
        (
            "-d2-1",
            Box::new(|n| make_elliptic_operator(&GradedVector::constant(n, -1.0))),
        ),
        (
            "-d2+1",
            Box::new(|n| make_elliptic_operator(&GradedVector::constant(n, 1.0))),
        ),
    ];
    for (name, build) in &builders {
        let rep = bandwidth_stability(build.as_ref(), 32, RANK_TOL).unwrap();
        assert!(rep.stable, "{name}: {:?} vs {:?}", rep.dims_at_n, rep.dims_at_2n);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 10.0, "runtime {elapsed:.1}s exceeds 10s");
    println!(
        "criterion 02 PASS: catalog dimensions (1,1,0)/(2,2,0)/(0,0,0) bandwidth-stable at N = 32, 64 ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_03_index_laws() {
    let bandwidth = 32;
    let mut perturbations = 0usize;
    for (name, op) in catalog(bandwidth) {
        let seeds: Vec<u64> = (0..20).collect();
        let exp =
            index_invariance_experiment(&op, &seeds, 2, 3.0, 1e-3, RANK_TOL).unwrap();
        assert_eq!(exp.violations, 0, "{name}: index moved under perturbation");
        perturbations += exp.rows.len();
    }
    let mut pairs = 0usize;
    for seed in 0..10u64 {
        let a = make_elliptic_operator(&GradedVector::constant(bandwidth, -1.0)).unwrap();
        let k = random_strongly_smoothing(seed, bandwidth, 1, 3.0, 1e-2);
        let b = GradedOperator::differentiation(bandwidth)
            .add(k.operator())
            .unwrap();
        assert!(
            index_additivity_check(&a, &b, RANK_TOL).unwrap(),
            "pair seed {seed}"
        );
        pairs += 1;
    }
    println!(
        "criterion 03 PASS: index invariant under {perturbations} smoothing perturbations, additive on {pairs} composition pairs"
    );
}

#[test]
fn criterion_04_nash_moser_convergence() {
    let start = Instant::now();
    let inst = acceptance_instance();
    assert_eq!((inst.bandwidth, inst.levels), (64, 4));
    assert!((inst.epsilon - 0.1).abs() < 1e-15);
    let bundle = inst.bundle().unwrap();
    let y = inst.target();
    assert!((y.norm(0) - 1e-2).abs() < 1e-14);
    let family = SmoothingFamily::sharp();
    let out = solve(&bundle, &y, &inst.config(), &family).unwrap();

    assert_eq!(out.trace.status, SolveStatus::Converged);
    let final_residual = out.trace.final_residual0().unwrap();
    assert!(final_residual < 1e-10, "final residual {final_residual}");
    let iterations = out.trace.rows.len() - 1;
    assert!(iterations <= 8, "{iterations} iterations");

    let fit = fit_decay(&out.trace, 0).unwrap();
    assert!(fit.slope < 0.0, "slope {}", fit.slope);
    assert!(fit.r_squared >= 0.9, "r² {}", fit.r_squared);

    assert!(superlinearity_check(&out.trace), "superlinearity window");

    let recursion = residual_recursion_check(&bundle, &out, Smoother::Family(&family)).unwrap();
    for row in &recursion.rows {
        assert!(
            row.mismatch <= 1e-6,
            "recursion mismatch {} at iteration {}",
            row.mismatch,
            row.iter
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 60.0, "runtime {elapsed:.1}s exceeds 60s");
    println!(
        "criterion 04 PASS: converged in {iterations} iterations to {final_residual:.2e}, slope {:.2} (r² {:.3}), recursion mismatch {:.2e} ({elapsed:.1}s)",
        fit.slope, fit.r_squared, recursion.max_mismatch
    );
}

#[test]
fn criterion_05_smoothing_matters() {
    let inst = stress_instance();
    assert_eq!(inst.bandwidth, 64);
    assert!((inst.target_decay - 1.5).abs() < 1e-15);
    let bundle = inst.bundle().unwrap();
    let y = inst.target();
    let cfg = inst.config();
    let family = SmoothingFamily::sharp();

    let smoothed = solve(&bundle, &y, &cfg, &family).unwrap();
    assert_eq!(
        smoothed.trace.status,
        SolveStatus::Converged,
        "smoothed run must converge on the stress instance"
    );

    let plain = plain_newton(&bundle, &y, &cfg).unwrap();
    let plain_failed = plain.trace.status == SolveStatus::Diverged
        || plain.trace.status == SolveStatus::DomainExit;
    let mut max_ratio = 0.0f64;
    for r in 0..smoothed.trace.rows.len().min(plain.trace.rows.len()) {
        let s4 = smoothed.trace.rows[r].x_norms[4];
        let p4 = plain.trace.rows[r].x_norms[4];
        if s4 > 0.0 {
            max_ratio = max_ratio.max(p4 / s4);
        }
    }
    assert!(
        plain_failed || max_ratio >= 2.0,
        "plain Newton neither failed nor exceeded the level-4 norms (ratio {max_ratio:.2})"
    );
    println!(
        "criterion 05 PASS: smoothed run converged; plain Newton {} (max level-4 iterate ratio {max_ratio:.1})",
        if plain_failed { "failed" } else { "carries uncontrolled level-4 norms" }
    );
}

#[test]
fn criterion_06_injectivity_constants() {
    let inst = acceptance_instance();
    let bundle = inst.bundle().unwrap();
    let report = injectivity_probe(&bundle, 4, 1000, 515).unwrap();
    let c0 = &report.rows[0];
    assert!(c0.c_full.is_finite() && c0.c_full > 0.0);
    assert!(
        c0.c_full <= 2.0 * c0.c_half,
        "c'_0 doubled: {} at 500 pairs vs {} at 1000",
        c0.c_half,
        c0.c_full
    );
    println!(
        "criterion 06 PASS: c'_0 = {:.3} at 1000 pairs vs {:.3} at 500 (doubling-stable)",
        c0.c_full, c0.c_half
    );
}

#[test]
fn criterion_07_non_uniform_continuity() {
    let start = Instant::now();
    let shift = 0.1 * std::f64::consts::TAU;
    let report = uniform_continuity_failure_experiment(0, shift, 40, 512).unwrap();
    assert_eq!(report.threshold, 10);
    assert!((report.parameter_offset_norm - shift).abs() < 1e-15);
    let mut checked = 0usize;
    for row in &report.rows {
        if row.concentration >= 5 && row.concentration >= report.threshold {
            let d = row
                .separation
                .expect("all n ≤ 40 are resolvable at N = 512");
            assert!(d >= SEPARATION_FLOOR, "n = {}: d = {d}", row.concentration);
            checked += 1;
        }
    }
    assert_eq!(checked, 31, "n = 10..40 inclusive");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 20.0, "runtime {elapsed:.1}s exceeds 20s");
    println!(
        "criterion 07 PASS: separation ≥ {SEPARATION_FLOOR} for all {checked} bumps beyond the threshold (min {:.4}, offset norm {:.4}, {elapsed:.1}s)",
        report.min_separation_beyond_threshold.unwrap(), shift
    );
}

#[test]
fn criterion_08_derivative_loss() {
    let report = derivative_loss_probe(2, 200).unwrap();
    assert!((report.ts.first().unwrap() - 1e-4).abs() < 1e-18);
    assert!((report.ts.last().unwrap() - 1e-1).abs() < 1e-15);
    assert!(
        report.smooth_slope >= 0.8 && report.smooth_slope <= 1.2,
        "smooth slope {}",
        report.smooth_slope
    );
    assert!(
        report.rough_min >= report.floor,
        "rough curve min {} below frozen floor {}",
        report.rough_min,
        report.floor
    );
    println!(
        "criterion 08 PASS: smooth-direction slope {:.3} in [0.8, 1.2]; rough-direction min {:.3} ≥ frozen {:.2}",
        report.smooth_slope, report.rough_min, report.floor
    );
}

#[test]
fn criterion_09_finite_dimensional_reduction() {
    let fix = reduction_fixture();
    let bundle = Rc::new(
        make_perturbed_burgers(fix.epsilon, fix.bandwidth, fix.kernel_seed).unwrap(),
    );
    let x0 = GradedVector::zero(fix.bandwidth);
    let cfg = scale_calculus::solver::SolverConfig::recommended(0, 1, 4, 1.0);
    let family = SmoothingFamily::sharp();
    let report = finite_dim_reduction(
        bundle,
        &x0,
        &cfg,
        &family,
        RANK_TOL,
        fix.samples,
        fix.sample_radius,
        fix.sample_seed,
    )
    .unwrap();
    assert_eq!((report.dim_ker, report.dim_coker), (1, 1));
    assert_eq!(report.samples, 50);
    assert!(
        report.max_off_complement_residual <= 1e-8,
        "off-complement residual {}",
        report.max_off_complement_residual
    );
    assert!(report.base_k_norm <= 1e-9, "k(x0) = {}", report.base_k_norm);
    assert!(
        report.base_dk_estimate <= 1e-4,
        "Dk(x0) estimate {}",
        report.base_dk_estimate
    );
    println!(
        "criterion 09 PASS: 1-dim kernel, off-complement residual {:.2e} over {} samples, k(x0) = {:.2e}, Dk(x0) ≈ {:.2e}",
        report.max_off_complement_residual, report.samples, report.base_k_norm, report.base_dk_estimate
    );
}

#[test]
fn criterion_10_determinism() {
    // identical configs and seeds must reproduce byte-identical artifacts
    let inst = acceptance_instance();
    let family = SmoothingFamily::sharp();
    let run = || {
        let bundle = inst.bundle().unwrap();
        let y = inst.target();
        let out = solve(&bundle, &y, &inst.config(), &family).unwrap();
        out.trace.to_csv()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "solve traces differ between reruns");

    let verify = || {
        let grid = default_t_grid(64, 16);
        let report = verify_smoothing_family(&SmoothingFamily::sharp(), 64, 4, &grid, 32, 7);
        serde_json::to_string(&report).unwrap()
    };
    assert_eq!(verify(), verify(), "verifier reports differ between reruns");

    let probe = || {
        let bundle = inst.bundle().unwrap();
        let rep = injectivity_probe(&bundle, 2, 64, 3).unwrap();
        serde_json::to_string(&rep).unwrap()
    };
    assert_eq!(probe(), probe(), "probe reports differ between reruns");
    println!("criterion 10 PASS: solver trace, verifier report and probe report reproduce byte-identically");
}
