//! The experiment subcommands. Exit codes: 0 for a passing experiment,
//! 1 for an experiment-negative outcome (divergence, failed verification),
//! 2 for usage or I/O problems (mapped from errors by main).

use anyhow::{bail, Context, Result};
use std::path::Path;
use std::rc::Rc;

use scale_calculus::problems::{
    derivative_loss_probe_with, make_burgers_map, make_elliptic_operator, make_perturbed_burgers,
    uniform_continuity_failure_experiment, DerivativeLossParams, SolveInstance,
};
use scale_calculus::reduction::finite_dim_reduction;
use scale_calculus::smoothing::{default_t_grid, verify_smoothing_family, SmoothingFamily};
use scale_calculus::solver::{
    fit_decay, injectivity_probe, plain_newton, residual_recursion_check, solve,
    superlinearity_check, SolveStatus, Smoother, SolverConfig,
};
use scale_calculus::tame::{check_inverse_consistency, estimate_tame_constants};
use scale_calculus::{
    analyze_fredholm, bandwidth_stability, index_additivity_check, index_invariance_experiment,
    random_strongly_smoothing, GradedOperator, GradedVector,
};

use crate::config::{write_metadata, write_output, ExperimentConfig, RunMetadata};

fn meta_for(cfg: &ExperimentConfig, outputs: &[&Path]) -> RunMetadata {
    RunMetadata {
        command: cfg.command.clone(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
        bundle: None,
        status: None,
    }
}

fn instance_from(cfg: &ExperimentConfig) -> SolveInstance {
    SolveInstance {
        name: format!("burgers-{}", cfg.command),
        bandwidth: cfg.bandwidth,
        levels: cfg.levels,
        epsilon: cfg.epsilon,
        target_decay: cfg.target_decay,
        target_norm0: cfg.target_norm0,
        target_seed: cfg.seed,
        mu: cfg.mu,
        base: cfg.base,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        guard: cfg.guard,
    }
}

pub fn cmd_verify_smoothing(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    if cfg.levels > cfg.max_level {
        bail!("levels {} beyond max_level {}", cfg.levels, cfg.max_level);
    }
    if cfg.trials == 0 {
        bail!("trials must be positive");
    }
    let family = SmoothingFamily::sharp();
    let grid = default_t_grid(cfg.bandwidth, cfg.t_count);
    let report = verify_smoothing_family(
        &family,
        cfg.bandwidth,
        cfg.levels,
        &grid,
        cfg.trials,
        cfg.seed,
    );
    let json = serde_json::to_string_pretty(&report)?;
    let out = write_output(out_dir, "smoothing_report.json", &format!("{json}\n"))?;
    let mut meta = meta_for(cfg, &[&out]);
    meta.status = Some(if report.pass { "pass" } else { "fail" }.into());
    write_metadata(out_dir, &meta)?;
    println!(
        "smoothing verifier: worst ratios {} / {} -> {}",
        report.worst_ratio_ineq1,
        report.worst_ratio_ineq2,
        if report.pass { "pass" } else { "fail" }
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn catalog(bandwidth: usize) -> Result<Vec<GradedOperator>> {
    Ok(vec![
        GradedOperator::differentiation(bandwidth),
        make_elliptic_operator(&GradedVector::constant(bandwidth, -1.0))?,
        make_elliptic_operator(&GradedVector::constant(bandwidth, 1.0))?,
    ])
}

pub fn cmd_fredholm(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let mut outputs = Vec::new();
    let mut all_ok = true;
    let mut lines = vec!["operator,dim_ker,dim_coker,index,gap_ratio,stable".to_string()];
    for (i, op) in catalog(cfg.bandwidth)?.into_iter().enumerate() {
        let report = analyze_fredholm(&op, cfg.rank_tol)?;
        let name = format!("fredholm_{i}.json");
        let json = serde_json::to_string_pretty(&report)?;
        outputs.push(write_output(out_dir, &name, &format!("{json}\n"))?);
        // dimensions must survive doubling the bandwidth
        let label = op.label().to_string();
        let build = move |n: usize| -> scale_calculus::Result<GradedOperator> {
            Ok(match label.as_str() {
                "d/dtheta" => GradedOperator::differentiation(n),
                "elliptic" if i == 1 => {
                    make_elliptic_operator(&GradedVector::constant(n, -1.0))?
                }
                _ => make_elliptic_operator(&GradedVector::constant(n, 1.0))?,
            })
        };
        let stab = bandwidth_stability(&build, cfg.bandwidth, cfg.rank_tol)?;
        all_ok &= stab.stable && !report.gap_ambiguous;
        lines.push(format!(
            "{},{},{},{},{},{}",
            op.label(),
            report.dim_ker,
            report.dim_coker,
            report.index,
            report.gap_ratio,
            stab.stable
        ));

        let seeds: Vec<u64> = (0..20).map(|k| cfg.seed.wrapping_add(k)).collect();
        let exp = index_invariance_experiment(&op, &seeds, 2, 3.0, 1e-3, cfg.rank_tol)?;
        all_ok &= exp.violations == 0;
        outputs.push(write_output(
            out_dir,
            &format!("index_experiment_{i}.csv"),
            &exp.to_csv(),
        )?);
    }
    // composition additivity on diagonal-plus-smoothing pairs
    let mut additivity_ok = true;
    for k in 0..10u64 {
        let a = make_elliptic_operator(&GradedVector::constant(cfg.bandwidth, -1.0))?;
        let smoothing = random_strongly_smoothing(cfg.seed.wrapping_add(100 + k), cfg.bandwidth, 1, 3.0, 1e-2);
        let b = GradedOperator::differentiation(cfg.bandwidth).add(smoothing.operator())?;
        additivity_ok &= index_additivity_check(&a, &b, cfg.rank_tol)?;
    }
    all_ok &= additivity_ok;
    lines.push(format!("composition_additivity,,,,,{additivity_ok}"));
    outputs.push(write_output(
        out_dir,
        "fredholm_summary.csv",
        &(lines.join("\n") + "\n"),
    )?);

    let refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    let mut meta = meta_for(cfg, &refs);
    meta.status = Some(if all_ok { "pass" } else { "fail" }.into());
    write_metadata(out_dir, &meta)?;
    println!("fredholm catalog: {}", if all_ok { "pass" } else { "fail" });
    Ok(if all_ok { 0 } else { 1 })
}

pub fn cmd_solve(cfg: &ExperimentConfig, out_dir: &Path, plain: bool) -> Result<i32> {
    let inst = instance_from(cfg);
    let bundle = inst.bundle().context("building the bundle")?;
    let y = inst.target();
    let family = SmoothingFamily::sharp();
    let solver_cfg = inst.config();
    let outcome = if plain {
        plain_newton(&bundle, &y, &solver_cfg)?
    } else {
        solve(&bundle, &y, &solver_cfg, &family)?
    };
    let csv = outcome.trace.to_csv();
    let out = write_output(out_dir, "solve_trace.csv", &csv)?;
    let mut meta = meta_for(cfg, &[&out]);
    meta.bundle = Some(bundle.name.clone());
    meta.status = Some(format!("{:?}", outcome.trace.status).to_lowercase());
    write_metadata(out_dir, &meta)?;
    println!(
        "solve [{}]: status {:?}, {} rows, final residual {:?}",
        bundle.name,
        outcome.trace.status,
        outcome.trace.rows.len(),
        outcome.trace.final_residual0()
    );
    if outcome.trace.status == SolveStatus::Converged {
        if let Ok(fit) = fit_decay(&outcome.trace, 0) {
            println!("residual decay: slope {} (r² {})", fit.slope, fit.r_squared);
        }
        let smoother = if plain {
            Smoother::Identity
        } else {
            Smoother::Family(&family)
        };
        let recursion = residual_recursion_check(&bundle, &outcome, smoother)?;
        println!(
            "recursion check: max mismatch {}, superlinear window {}",
            recursion.max_mismatch,
            superlinearity_check(&outcome.trace)
        );
        Ok(0)
    } else {
        Ok(1)
    }
}

pub fn cmd_tame_probe(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let bundle = make_burgers_map(cfg.epsilon, cfg.bandwidth)?;
    let constants = estimate_tame_constants(&bundle, cfg.levels, cfg.trials, cfg.seed)?;
    let consistency = check_inverse_consistency(&bundle, cfg.trials, cfg.seed)?;
    let probe = injectivity_probe(&bundle, cfg.levels, cfg.pairs, cfg.seed)?;
    let out_csv = write_output(out_dir, "tame_constants.csv", &constants.to_csv())?;
    let probe_json = serde_json::to_string_pretty(&probe)?;
    let out_probe = write_output(out_dir, "injectivity.json", &format!("{probe_json}\n"))?;
    let consistency_json = serde_json::to_string_pretty(&consistency)?;
    let out_cons = write_output(
        out_dir,
        "inverse_consistency.json",
        &format!("{consistency_json}\n"),
    )?;
    let ok = constants.all_stable()
        && probe.rows.iter().all(|r| r.stable)
        && consistency.worst_forward < 1e-9
        && consistency.worst_backward < 1e-9;
    let mut meta = meta_for(cfg, &[&out_csv, &out_probe, &out_cons]);
    meta.bundle = Some(bundle.name.clone());
    meta.status = Some(if ok { "pass" } else { "fail" }.into());
    write_metadata(out_dir, &meta)?;
    println!(
        "tame probe [{}]: stable {}, worst inverse residuals {} / {}",
        bundle.name,
        constants.all_stable(),
        consistency.worst_forward,
        consistency.worst_backward
    );
    Ok(if ok { 0 } else { 1 })
}

pub fn cmd_reparam_demo(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let uc = uniform_continuity_failure_experiment(0, cfg.shift, cfg.n_max, cfg.bandwidth)?;
    let out_uc = write_output(out_dir, "uniform_continuity.csv", &uc.to_csv())?;
    let bump_json = serde_json::to_string_pretty(
        &scale_calculus::problems::bump(0, uc.threshold.min(cfg.n_max), cfg.bandwidth)?.vector,
    )?;
    let out_bump = write_output(out_dir, "bump_fixture.json", &format!("{bump_json}\n"))?;
    let params = DerivativeLossParams {
        seed: cfg.seed,
        ..DerivativeLossParams::default()
    };
    let loss = derivative_loss_probe_with(2, cfg.n_max.max(100), &params)?;
    let out_loss = write_output(out_dir, "derivative_loss.csv", &loss.to_csv())?;
    let verdict = serde_json::json!({
        "uniform_continuity_pass": uc.pass,
        "min_separation": uc.min_separation_beyond_threshold,
        "separation_floor": uc.floor,
        "smooth_slope": loss.smooth_slope,
        "smooth_slope_in_band": loss.smooth_slope_in_band,
        "rough_min": loss.rough_min,
        "rough_bounded_below": loss.rough_bounded_below,
    });
    let out_verdict = write_output(
        out_dir,
        "reparam_verdict.json",
        &format!("{}\n", serde_json::to_string_pretty(&verdict)?),
    )?;
    let ok = uc.pass && loss.smooth_slope_in_band && loss.rough_bounded_below;
    let mut meta = meta_for(cfg, &[&out_uc, &out_bump, &out_loss, &out_verdict]);
    meta.status = Some(if ok { "pass" } else { "fail" }.into());
    write_metadata(out_dir, &meta)?;
    println!(
        "reparametrisation demo: separation {:?}, smooth slope {}, rough floor {} -> {}",
        uc.min_separation_beyond_threshold,
        loss.smooth_slope,
        loss.rough_min,
        if ok { "pass" } else { "fail" }
    );
    Ok(if ok { 0 } else { 1 })
}

pub fn cmd_reduce(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let bundle = Rc::new(make_perturbed_burgers(cfg.epsilon, cfg.bandwidth, cfg.seed)?);
    let x0 = GradedVector::zero(cfg.bandwidth);
    let solver_cfg = SolverConfig {
        p: 0,
        offset: 1,
        mu: cfg.mu,
        base: cfg.base,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        guard: cfg.guard,
        levels: cfg.levels,
    };
    let family = SmoothingFamily::sharp();
    let name = bundle.name.clone();
    let report = finite_dim_reduction(
        bundle,
        &x0,
        &solver_cfg,
        &family,
        cfg.rank_tol,
        cfg.trials.min(50),
        0.03,
        cfg.seed,
    )?;
    let json = serde_json::to_string_pretty(&report)?;
    let out = write_output(out_dir, "reduction_report.json", &format!("{json}\n"))?;
    let ok = report.max_off_complement_residual <= 1e-8
        && report.base_k_norm <= 1e-9
        && report.base_dk_estimate <= 1e-4;
    let mut meta = meta_for(cfg, &[&out]);
    meta.bundle = Some(name);
    meta.status = Some(if ok { "pass" } else { "fail" }.into());
    write_metadata(out_dir, &meta)?;
    println!(
        "reduction: kernel {}, off-complement residual {}, k(x0) {} -> {}",
        report.dim_ker,
        report.max_off_complement_residual,
        report.base_k_norm,
        if ok { "pass" } else { "fail" }
    );
    Ok(if ok { 0 } else { 1 })
}
