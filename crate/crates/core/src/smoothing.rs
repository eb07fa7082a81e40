//! The smoothing family S_t and the verifier for its two defining
//! inequalities,
//!
//! ```text
//!     ‖S_t u‖_n     ≤ C (1 + e^{(p+(n−m))t}) ‖u‖_m            for all m, n
//!     ‖u − S_t u‖_n ≤ C e^{(p−(m−n))t} ‖u‖_m                  for m − n ≥ p.
//! ```
//!
//! The hard frequency cutoff (keep mode n iff ln w(n) ≤ t) satisfies both
//! with p = 0 and C = 1: a kept mode has w(n) ≤ e^t, so its weight ratio
//! w(n)^{n−m} is at most e^{(n−m)t} when n ≥ m and at most 1 otherwise; a
//! dropped mode has w(n) > e^t, so w(n)^{n−m} < e^{−(m−n)t} when m ≥ n.
//! The price is a jump of S_t at each threshold t = ln w(n); a smooth ramp
//! variant trades the exact constants for continuity in t.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::{random_vector, weight, GradedVector};

/// How the frequency cutoff is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CutoffKind {
    /// Keep mode n iff ln w(n) ≤ t. Exact constants C = 1, p = 0.
    Sharp,
    /// Multiply mode n by a C¹ ramp falling from 1 at ln w(n) = t to 0 at
    /// ln w(n) = t + width. Continuous in t; constants estimated by the
    /// verifier.
    Ramp { width: f64 },
}

/// One-parameter smoothing family with its certified constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFamily {
    pub cutoff: CutoffKind,
    /// Level-shift exponent in the smoothing inequalities.
    pub p: u32,
}

impl SmoothingFamily {
    /// The hard cutoff with certified p = 0, C = 1.
    pub fn sharp() -> Self {
        SmoothingFamily {
            cutoff: CutoffKind::Sharp,
            p: 0,
        }
    }

    /// The C¹ ramp variant for continuity-sensitive demos.
    pub fn ramp(width: f64) -> Self {
        SmoothingFamily {
            cutoff: CutoffKind::Ramp { width },
            p: 0,
        }
    }

    /// Certified constant for the two inequalities, if any.
    pub fn certified_c(&self) -> Option<f64> {
        match self.cutoff {
            CutoffKind::Sharp => Some(1.0),
            CutoffKind::Ramp { .. } => None,
        }
    }

    /// Multiplier applied to mode n at time t.
    fn multiplier(&self, n: i64, t: f64) -> f64 {
        let x = weight(n).ln();
        match self.cutoff {
            CutoffKind::Sharp => {
                if x <= t {
                    1.0
                } else {
                    0.0
                }
            }
            CutoffKind::Ramp { width } => {
                if x <= t {
                    1.0
                } else if x >= t + width {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (x - t) / width).cos())
                }
            }
        }
    }

    /// Applies S_t: coefficients with w(n) > e^t are zeroed (or ramped off),
    /// the rest pass through unchanged.
    pub fn smooth(&self, u: &GradedVector, t: f64) -> Result<GradedVector> {
        if t < 0.0 {
            return Err(Error::NegativeSmoothingTime { t });
        }
        let n0 = u.bandwidth() as i64;
        let mut coeffs = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let n = i as i64 - n0;
            coeffs.push(u.coeffs()[i] * self.multiplier(n, t));
        }
        GradedVector::new(u.bandwidth(), coeffs, u.is_real())
    }

    /// Smallest t at which S_t is the identity on bandwidth-N vectors.
    pub fn saturation_time(&self, bandwidth: usize) -> f64 {
        weight(bandwidth as i64).ln()
    }
}

/// Default verification grid: `uniform` points on [0, ln w(N)] plus every
/// cutoff threshold ln w(n) shifted by ±1e−6, clamped to t ≥ 0, sorted and
/// deduplicated.
pub fn default_t_grid(bandwidth: usize, uniform: usize) -> Vec<f64> {
    let t_max = weight(bandwidth as i64).ln();
    let mut grid = Vec::new();
    if uniform == 1 {
        grid.push(0.0);
    } else {
        for i in 0..uniform {
            grid.push(t_max * i as f64 / (uniform - 1) as f64);
        }
    }
    for n in 0..=bandwidth as i64 {
        let thr = weight(n).ln();
        for t in [thr - 1e-6, thr + 1e-6] {
            if t >= 0.0 {
                grid.push(t);
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// Verifier report; serializes to the JSON shape
/// `{p, levels, t_count, trials, worst_ratio_ineq1, worst_ratio_ineq2, pass}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub p: u32,
    pub levels: usize,
    pub t_count: usize,
    pub trials: usize,
    /// max over (m, n, t, u) of ‖S_t u‖_n / ((1 + e^{(p+(n−m))t}) ‖u‖_m)
    pub worst_ratio_ineq1: f64,
    /// max over m ≥ n + p of ‖u − S_t u‖_n / (e^{(p−(m−n))t} ‖u‖_m)
    pub worst_ratio_ineq2: f64,
    pub pass: bool,
}

/// Slack allowed on top of C = 1 for floating-point accumulation.
pub const VERIFY_SLACK: f64 = 1e-12;

/// Checks both smoothing inequalities with p taken from the family and
/// C = 1 on random vectors: `trials` vectors per t value, all level pairs
/// m, n ≤ `levels`. Failures are reported through the ratios and the pass
/// flag, never thrown.
///
/// Per trial the squared norms of the kept and dropped parts are accumulated
/// level by level in one pass, which gives every (m, n) pair at once.
pub fn verify_smoothing_family(
    family: &SmoothingFamily,
    bandwidth: usize,
    levels: usize,
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> SmoothingReport {
    let decays = [0.75, 1.5, 3.0];
    let mut worst1 = 0.0f64;
    let mut worst2 = 0.0f64;
    let p = family.p as i64;

    for (ti, &t) in t_grid.iter().enumerate() {
        for trial in 0..trials {
            let seed_t = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((ti * trials + trial) as u64);
            let u = random_vector(seed_t, bandwidth, decays[trial % decays.len()]);
            // squared level norms of S_t u and (id − S_t) u
            let mut kept = vec![0.0f64; levels + 1];
            let mut dropped = vec![0.0f64; levels + 1];
            for (n, c) in u.modes() {
                let g = family.multiplier(n, t);
                let w = weight(n);
                let a = c.norm_sqr();
                let mut wk = 1.0;
                for k in 0..=levels {
                    kept[k] += wk * g * g * a;
                    dropped[k] += wk * (1.0 - g) * (1.0 - g) * a;
                    wk *= w * w;
                }
            }
            for m in 0..=levels {
                let um = (kept[m] + dropped[m]).sqrt();
                if um == 0.0 {
                    continue;
                }
                for n in 0..=levels {
                    let smoothed_n = kept[n].sqrt();
                    let bound1 = (1.0 + ((p + n as i64 - m as i64) as f64 * t).exp()) * um;
                    worst1 = worst1.max(smoothed_n / bound1);
                    if m as i64 - n as i64 >= p {
                        let removed_n = dropped[n].sqrt();
                        let bound2 = ((p - (m as i64 - n as i64)) as f64 * t).exp() * um;
                        worst2 = worst2.max(removed_n / bound2);
                    }
                }
            }
        }
    }

    let cap = 1.0 + VERIFY_SLACK;
    SmoothingReport {
        p: family.p,
        levels,
        t_count: t_grid.len(),
        trials,
        worst_ratio_ineq1: worst1,
        worst_ratio_ineq2: worst2,
        pass: worst1 <= cap && worst2 <= cap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::GradedVector;

    #[test]
    fn t_zero_keeps_only_the_mean() {
        let f = SmoothingFamily::sharp();
        let c = GradedVector::cosine(8, 1);
        assert_eq!(f.smooth(&c, 0.0).unwrap().norm(0), 0.0);
        let mix = GradedVector::constant(8, 1.0).add(&c);
        let s = f.smooth(&mix, 0.0).unwrap();
        assert!(s.sub(&GradedVector::constant(8, 1.0)).norm(0) < 1e-15);
    }

    #[test]
    fn large_t_is_identity() {
        let f = SmoothingFamily::sharp();
        let u = random_vector(2, 64, 0.5);
        let s = f.smooth(&u, 10.0).unwrap();
        assert!(s.sub(&u).norm(0) == 0.0, "e^10 > 65 keeps everything");
        let t_sat = f.saturation_time(64);
        assert!(f.smooth(&u, t_sat).unwrap().sub(&u).norm(0) == 0.0);
    }

    #[test]
    fn cutoff_at_half_keeps_constant_only() {
        // ln 2 ≈ 0.693 > 0.5, so the ±1 modes drop
        let f = SmoothingFamily::sharp();
        let u = GradedVector::constant(8, 1.0).add(&GradedVector::cosine(8, 1));
        let s = f.smooth(&u, 0.5).unwrap();
        assert!(s.sub(&GradedVector::constant(8, 1.0)).norm(0) < 1e-15);
    }

    #[test]
    fn negative_t_is_a_domain_error() {
        let f = SmoothingFamily::sharp();
        let u = GradedVector::zero(4);
        assert!(matches!(
            f.smooth(&u, -0.1),
            Err(Error::NegativeSmoothingTime { .. })
        ));
    }

    #[test]
    fn projection_idempotence_is_exact() {
        let f = SmoothingFamily::sharp();
        let u = random_vector(5, 32, 0.75);
        for t in [0.0, 0.4, 1.1, 2.3] {
            let once = f.smooth(&u, t).unwrap();
            let twice = f.smooth(&once, t).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn retained_modes_grow_with_t() {
        let f = SmoothingFamily::sharp();
        let u = random_vector(6, 32, 0.0);
        let mut prev = 0usize;
        for i in 0..20 {
            let t = 0.2 * i as f64;
            let s = f.smooth(&u, t).unwrap();
            let count = s.coeffs().iter().filter(|c| c.norm() > 0.0).count();
            assert!(count >= prev, "mode set must be nested in t");
            prev = count;
        }
    }

    #[test]
    fn single_mode_ratios_match_the_bounds() {
        // kept single mode: first-inequality ratio is w^{n−m} ≤ e^{(n−m)t}
        let n0: i64 = 3;
        let u = GradedVector::unit_mode(8, n0);
        let f = SmoothingFamily::sharp();
        let t_keep = weight(n0).ln() + 0.05;
        let s = f.smooth(&u, t_keep).unwrap();
        for m in 0..=4usize {
            for n in 0..=4usize {
                let ratio = s.norm(n) / u.norm(m);
                let per_mode = weight(n0).powi(n as i32 - m as i32);
                assert!((ratio - per_mode).abs() < 1e-12 * per_mode.max(1.0));
                assert!(ratio <= (1.0 + (((n as f64) - (m as f64)) * t_keep).exp()) * (1.0 + 1e-12));
            }
        }
        // dropped single mode: second-inequality ratio is w^{n−m} ≤ e^{−(m−n)t}
        let t_drop = weight(n0).ln() - 0.05;
        let r = u.sub(&f.smooth(&u, t_drop).unwrap());
        for m in 0..=4usize {
            for n in 0..=m {
                let ratio = r.norm(n) / u.norm(m);
                let bound = (-((m - n) as f64) * t_drop).exp();
                assert!(ratio <= bound * (1.0 + 1e-12), "{ratio} > {bound}");
            }
        }
    }

    #[test]
    fn verifier_passes_for_the_sharp_family() {
        let f = SmoothingFamily::sharp();
        let grid = default_t_grid(32, 16);
        let report = verify_smoothing_family(&f, 32, 4, &grid, 8, 99);
        assert!(report.pass, "ratios {:?}", (report.worst_ratio_ineq1, report.worst_ratio_ineq2));
        assert!(report.worst_ratio_ineq1 <= 1.0 + VERIFY_SLACK);
        assert!(report.worst_ratio_ineq2 <= 1.0 + VERIFY_SLACK);
    }

    #[test]
    fn verifier_zero_trials_reports_zero_ratios() {
        let f = SmoothingFamily::sharp();
        let report = verify_smoothing_family(&f, 8, 2, &[0.5], 0, 1);
        assert_eq!(report.worst_ratio_ineq1, 0.0);
        assert_eq!(report.worst_ratio_ineq2, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn ramp_family_satisfies_the_tail_inequality() {
        // the ramp only attenuates dropped modes further, so inequality 2
        // still holds with C = 1; inequality 1 picks up a finite constant
        let f = SmoothingFamily::ramp(1.0);
        let grid = default_t_grid(32, 16);
        let report = verify_smoothing_family(&f, 32, 4, &grid, 8, 7);
        assert!(report.worst_ratio_ineq2 <= 1.0 + VERIFY_SLACK);
        assert!(report.worst_ratio_ineq1.is_finite());
    }

    #[test]
    fn continuity_proxy_away_from_thresholds() {
        // t ↦ S_t u is locally constant off the thresholds, and the ramp
        // variant moves continuously through them
        let sharp = SmoothingFamily::sharp();
        let u = random_vector(12, 16, 0.5);
        let t = 1.3; // between ln 3 ≈ 1.0986 and ln 4 ≈ 1.386
        let a = sharp.smooth(&u, t).unwrap();
        let b = sharp.smooth(&u, t + 1e-4).unwrap();
        assert_eq!(a, b);

        let ramp = SmoothingFamily::ramp(0.5);
        let thr = weight(3).ln();
        let before = ramp.smooth(&u, thr - 1e-6).unwrap();
        let after = ramp.smooth(&u, thr + 1e-6).unwrap();
        assert!(after.sub(&before).norm(0) < 1e-4);
    }
}
