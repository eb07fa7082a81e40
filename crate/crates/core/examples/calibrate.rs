//! Build-time calibration for the frozen experiment fixtures: prints the
//! derivative-loss probe curves and sweeps stress-instance candidates for
//! the smoothed-vs-plain separation, writing the calibration log.

use scale_calculus::problems::*;
use scale_calculus::smoothing::SmoothingFamily;
use scale_calculus::solver::{fit_decay, plain_newton, solve, superlinearity_check};

fn main() {
    let family = SmoothingFamily::sharp();

    println!("== acceptance instance ==");
    let inst = acceptance_instance();
    let bundle = inst.bundle().unwrap();
    let y = inst.target();
    let out = solve(&bundle, &y, &inst.config(), &family).unwrap();
    println!("status {:?} rows {}", out.trace.status, out.trace.rows.len());
    for row in &out.trace.rows {
        println!("  r={} t={:.3} z0={:.3e} x4={:.3e}", row.iter, row.t, row.z_norms[0], row.x_norms[4]);
    }
    if let Ok(fit) = fit_decay(&out.trace, 0) {
        println!("decay fit: slope {:.3} r2 {:.4}", fit.slope, fit.r_squared);
    }
    println!("superlinear: {}", superlinearity_check(&out.trace));

    println!("\n== derivative loss probe (level 2) ==");
    let rep = derivative_loss_probe(2, 8).unwrap();
    println!("smooth slope {:.3} (r2 {:.3}), rough min {:.4}", rep.smooth_slope, rep.smooth_r_squared, rep.rough_min);
    for i in (0..rep.ts.len()).step_by(5) {
        println!("  t={:.2e} rough={:.4e} smooth={:.4e}", rep.ts[i], rep.rough_curve[i], rep.smooth_curve[i]);
    }

    println!("\n== stress sweep ==");
    println!("eps,norm0,decay,smoothed_status,smoothed_iters,plain_status,plain_iters,max_level4_ratio");
    for eps in [0.1, 0.2, 0.4] {
        for norm0 in [0.05, 0.1, 0.2, 0.4] {
            let mut inst = stress_instance();
            inst.epsilon = eps;
            inst.target_norm0 = norm0;
            let b = inst.bundle().unwrap();
            let y = inst.target();
            let cfg = inst.config();
            let sm = solve(&b, &y, &cfg, &family).unwrap();
            let pl = plain_newton(&b, &y, &cfg).unwrap();
            let mut max_ratio = 0.0f64;
            for r in 0..sm.trace.rows.len().min(pl.trace.rows.len()) {
                let s4 = sm.trace.rows[r].x_norms[4];
                let p4 = pl.trace.rows[r].x_norms[4];
                if s4 > 0.0 {
                    max_ratio = max_ratio.max(p4 / s4);
                }
            }
            println!(
                "{eps},{norm0},{},{:?},{},{:?},{},{:.2}",
                inst.target_decay,
                sm.trace.status,
                sm.trace.rows.len(),
                pl.trace.status,
                pl.trace.rows.len(),
                max_ratio
            );
        }
    }
}
