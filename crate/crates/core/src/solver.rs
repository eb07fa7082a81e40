//! The modified Newton iteration with smoothing,
//!
//! ```text
//!     x_0 = 0,   z_r = y − f̃(x_r),   Δx_r = S_{t_r} ψ̃(x_r) z_r,
//!     x_{r+1} = x_r + Δx_r,          t_r = b^r  (b = 3/2 by default),
//! ```
//!
//! together with its plain-Newton comparator (S_t replaced by the identity),
//! per-level trace instrumentation, residual-decay fits, the injectivity
//! constant probe, and the recursion check that recomputes
//! z_{r+1} = Df̃(x_r)(id − S_{t_r})ψ̃(x_r)z_r − ∫₀¹(1−t)D²f̃(x_r+tΔx_r)(Δx_r,Δx_r) dt
//! by numerical quadrature.
//!
//! The map is always used in shifted coordinates f̃(x) = f(x) − f(0), so a
//! nonzero f(0) is absorbed before the iteration starts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::linear_fit;
use crate::smoothing::SmoothingFamily;
use crate::tame::{GradedPoint, TameMapBundle, SAMPLE_DECAYS};

/// Parameters of one solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Exponent p of the smoothing family.
    pub p: u32,
    /// Offset k₀ of the ψ tame estimate.
    pub offset: usize,
    /// Decay parameter μ; the default is 16ρ with ρ = 2(p + k₀) + 1.
    pub mu: f64,
    /// Schedule base b > 1 in t_r = b^r.
    pub base: f64,
    pub max_iter: usize,
    /// Residual target at level 0.
    pub tol: f64,
    /// Divergence bound: status diverged once ‖x_r‖_0 ≥ guard.
    pub guard: f64,
    /// Levels 0..=levels are traced.
    pub levels: usize,
}

impl SolverConfig {
    /// ρ = 2(p + k₀) + 1.
    pub fn rho(p: u32, offset: usize) -> f64 {
        2.0 * (p as f64 + offset as f64) + 1.0
    }

    /// Defaults: μ = 16ρ, base 3/2, guard 10·δ.
    pub fn recommended(p: u32, offset: usize, levels: usize, domain_radius: f64) -> Self {
        SolverConfig {
            p,
            offset,
            mu: 16.0 * Self::rho(p, offset),
            base: 1.5,
            max_iter: 40,
            tol: 1e-12,
            guard: 10.0 * domain_radius,
            levels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base <= 1.0 || self.base > 2.0 {
            return Err(Error::InvalidParameter {
                context: format!("schedule base {} outside (1, 2]", self.base),
            });
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidParameter {
                context: format!("tol {} must be positive", self.tol),
            });
        }
        if self.guard < 0.0 || !self.guard.is_finite() {
            return Err(Error::InvalidParameter {
                context: format!("guard {} must be finite and nonnegative", self.guard),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
    DomainExit,
}

/// One iteration record: norms of x_r, z_r and Δx_r at levels 0..=K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub t: f64,
    pub x_norms: Vec<f64>,
    pub z_norms: Vec<f64>,
    pub dx_norms: Vec<f64>,
}

/// Per-run record. Every z_r is recomputed as y − f̃(x_r), never updated
/// incrementally, and x_{r+1} − x_r is exactly the recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub levels: usize,
    pub status: SolveStatus,
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    /// CSV columns: r, t_r, x_norm_0..K, z_norm_0..K, dx_norm_0..K.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("r,t_r");
        for tag in ["x_norm", "z_norm", "dx_norm"] {
            for j in 0..=self.levels {
                header.push_str(&format!(",{tag}_{j}"));
            }
        }
        header.push('\n');
        let mut out = header;
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.iter, row.t));
            for v in row
                .x_norms
                .iter()
                .chain(row.z_norms.iter())
                .chain(row.dx_norms.iter())
            {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn final_residual0(&self) -> Option<f64> {
        self.rows.last().map(|r| r.z_norms[0])
    }
}

/// Full outcome: the approximate solution of f̃(x) = y plus the iterates and
/// steps needed to re-derive every trace row.
pub struct SolveOutcome<X: GradedPoint> {
    pub x: X,
    pub trace: SolverTrace,
    /// x_r for every trace row.
    pub iterates: Vec<X>,
    /// z_r = y − f̃(x_r) for every trace row.
    pub residuals: Vec<X>,
    /// Δx_r for every row where a step was taken (one fewer than rows).
    pub deltas: Vec<X>,
}

/// The update ψ̃(x_r)z_r is passed through this before being added.
#[derive(Clone, Copy)]
pub enum Smoother<'a> {
    Family(&'a SmoothingFamily),
    /// Plain Newton: no smoothing.
    Identity,
}

impl Smoother<'_> {
    fn apply<X: GradedPoint>(&self, w: &X, t: f64) -> Result<X> {
        match self {
            Smoother::Family(f) => w.smooth(f, t),
            Smoother::Identity => Ok(w.clone()),
        }
    }
}

fn level_norms<X: GradedPoint>(x: &X, levels: usize) -> Vec<f64> {
    (0..=levels).map(|k| x.level_norm(k)).collect()
}

/// The shared iteration behind [`solve`] and [`plain_newton`].
pub fn run_newton<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    y: &X,
    cfg: &SolverConfig,
    smoother: Smoother<'_>,
) -> Result<SolveOutcome<X>> {
    cfg.validate()?;
    let levels = cfg.levels;
    let zero = y.zero_like();
    let f0 = bundle.eval(&zero)?;
    let y0 = y.level_norm(0);

    let mut x = zero;
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut iterates: Vec<X> = Vec::new();
    let mut residuals: Vec<X> = Vec::new();
    let mut deltas: Vec<X> = Vec::new();
    let mut status = SolveStatus::MaxIter;

    for r in 0..=cfg.max_iter {
        let t_r = cfg.base.powi(r as i32);
        // z_r recomputed from scratch each row
        let z = match bundle.eval(&x) {
            Ok(fx) => y.sub(&fx.sub(&f0)),
            Err(Error::DomainExit { .. }) => {
                status = SolveStatus::DomainExit;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut row = TraceRow {
            iter: r,
            t: t_r,
            x_norms: level_norms(&x, levels),
            z_norms: level_norms(&z, levels),
            dx_norms: vec![0.0; levels + 1],
        };
        let z0 = row.z_norms[0];
        if z0 <= cfg.tol {
            status = SolveStatus::Converged;
            iterates.push(x.clone());
            residuals.push(z);
            rows.push(row);
            break;
        }
        if row.x_norms[0] >= cfg.guard || z0 > 1e3 * y0 {
            status = SolveStatus::Diverged;
            iterates.push(x.clone());
            residuals.push(z);
            rows.push(row);
            break;
        }
        if r == cfg.max_iter {
            status = SolveStatus::MaxIter;
            iterates.push(x.clone());
            residuals.push(z);
            rows.push(row);
            break;
        }
        let w = match bundle.inverse(&x, &z) {
            Ok(w) => w,
            Err(Error::DomainExit { .. }) | Err(Error::SingularSystem { .. }) => {
                status = SolveStatus::DomainExit;
                iterates.push(x.clone());
                residuals.push(z);
                rows.push(row);
                break;
            }
            Err(e) => return Err(e),
        };
        let dx = smoother.apply(&w, t_r)?;
        row.dx_norms = level_norms(&dx, levels);
        iterates.push(x.clone());
        residuals.push(z);
        deltas.push(dx.clone());
        rows.push(row);
        x = x.add(&dx);
    }

    Ok(SolveOutcome {
        x,
        trace: SolverTrace {
            levels,
            status,
            rows,
        },
        iterates,
        residuals,
        deltas,
    })
}

/// The smoothed iteration Δx_r = S_{t_r} ψ̃(x_r) z_r.
pub fn solve<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    y: &X,
    cfg: &SolverConfig,
    family: &SmoothingFamily,
) -> Result<SolveOutcome<X>> {
    run_newton(bundle, y, cfg, Smoother::Family(family))
}

/// The same loop with S_{t_r} replaced by the identity, isolating what the
/// smoothing step contributes.
pub fn plain_newton<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    y: &X,
    cfg: &SolverConfig,
) -> Result<SolveOutcome<X>> {
    run_newton(bundle, y, cfg, Smoother::Identity)
}

/// Least-squares fit of log ‖z_r‖_j against t_r.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the residual decay rate at level j over rows with
/// ‖z_r‖_j > 100 × machine epsilon × ‖z_0‖_j (rows at round-off are noise).
/// Needs at least 3 usable rows.
pub fn fit_decay(trace: &SolverTrace, level: usize) -> Result<DecayFit> {
    if level > trace.levels {
        return Err(Error::LevelOutOfRange {
            level,
            max_level: trace.levels,
        });
    }
    let z0 = trace
        .rows
        .first()
        .map(|r| r.z_norms[level])
        .unwrap_or(0.0);
    let floor = 100.0 * f64::EPSILON * z0;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for row in &trace.rows {
        let z = row.z_norms[level];
        if z > floor && z > 0.0 {
            ts.push(row.t);
            logs.push(z.ln());
        }
    }
    if ts.len() < 3 {
        return Err(Error::InsufficientData {
            context: format!("only {} usable rows for the decay fit", ts.len()),
        });
    }
    let (slope, _b, r2) = linear_fit(&ts, &logs);
    Ok(DecayFit {
        slope,
        r_squared: r2,
        points: ts.len(),
    })
}

/// Window for the superlinearity proxy: consecutive residuals with
/// ‖z_r‖_0 in this range must satisfy ‖z_{r+1}‖_0 ≤ ‖z_r‖_0^{1.2}.
pub const SUPERLINEAR_WINDOW: (f64, f64) = (1e-8, 1e-2);
pub const SUPERLINEAR_EXPONENT: f64 = 1.2;

pub fn superlinearity_check(trace: &SolverTrace) -> bool {
    let (lo, hi) = SUPERLINEAR_WINDOW;
    trace.rows.windows(2).all(|w| {
        let z = w[0].z_norms[0];
        if z >= lo && z <= hi {
            w[1].z_norms[0] <= z.powf(SUPERLINEAR_EXPONENT)
        } else {
            true
        }
    })
}

/// Empirical injectivity constants: per level j the supremum of
/// ‖y−x‖_j / ((‖x‖_{j+k₀} + ‖y‖_{j+k₀})‖Δf‖_{k₀} + ‖Δf‖_{j+k₀})
/// over sampled pairs in the δ-ball, with the x = y ratio defined as 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectivityRow {
    pub level: usize,
    /// Supremum over the first half of the pairs.
    pub c_half: f64,
    /// Supremum over all pairs.
    pub c_full: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub name: String,
    pub pairs: usize,
    pub rows: Vec<InjectivityRow>,
}

pub fn injectivity_probe<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    levels: usize,
    pairs: usize,
    seed: u64,
) -> Result<InjectivityReport> {
    if pairs < 32 {
        return Err(Error::InvalidParameter {
            context: format!("pairs = {pairs} < 32"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k0 = bundle.offset;
    let mut half = vec![0.0f64; levels + 1];
    let mut full = vec![0.0f64; levels + 1];
    for i in 0..pairs {
        let decay_x = SAMPLE_DECAYS[i % SAMPLE_DECAYS.len()];
        let decay_y = SAMPLE_DECAYS[(i + 1) % SAMPLE_DECAYS.len()];
        let x = bundle.sample(&mut rng, decay_x, 0.9 * bundle.domain_radius);
        let y = bundle.sample(&mut rng, decay_y, 0.9 * bundle.domain_radius);
        let df = bundle.eval(&y)?.sub(&bundle.eval(&x)?);
        let diff = y.sub(&x);
        for j in 0..=levels {
            let denom = (x.level_norm(j + k0) + y.level_norm(j + k0)) * df.level_norm(k0)
                + df.level_norm(j + k0);
            let ratio = if denom == 0.0 {
                0.0
            } else {
                diff.level_norm(j) / denom
            };
            if i < pairs / 2 {
                half[j] = half[j].max(ratio);
            }
            full[j] = full[j].max(ratio);
        }
    }
    let rows = (0..=levels)
        .map(|j| InjectivityRow {
            level: j,
            c_half: half[j],
            c_full: full[j],
            stable: full[j] <= 2.0 * half[j].max(f64::MIN_POSITIVE),
        })
        .collect();
    Ok(InjectivityReport {
        name: bundle.name.clone(),
        pairs,
        rows,
    })
}

/// Mismatch of the recorded z_{r+1} against the recomputed right-hand side
/// of the residual recursion, relative to ‖z_r‖_0 (the residual driving the
/// step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionRow {
    pub iter: usize,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionReport {
    pub rows: Vec<RecursionRow>,
    pub max_mismatch: f64,
    /// Relative movement of the Taylor integral when the quadrature node
    /// count doubles from 16 to 32, measured once on the first step.
    pub quadrature_doubling_delta: f64,
}

/// Composite-midpoint quadrature of ∫₀¹ (1−t) D²f̃(x_r + tΔx_r)(Δx_r, Δx_r) dt.
fn taylor_integral<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    x: &X,
    dx: &X,
    nodes: usize,
) -> Result<X> {
    let mut acc = x.zero_like();
    let h = 1.0 / nodes as f64;
    for i in 0..nodes {
        let tau = (i as f64 + 0.5) * h;
        let xt = x.add_scaled(dx, tau);
        let d2 = bundle.second_deriv(&xt, dx, dx)?;
        acc = acc.add_scaled(&d2, (1.0 - tau) * h);
    }
    Ok(acc)
}

/// Number of quadrature nodes for the Taylor term.
pub const TAYLOR_QUADRATURE_NODES: usize = 16;

/// Recomputes, for every step of a recorded run,
/// z_{r+1} = Df̃(x_r)(id − S_{t_r})ψ̃(x_r)z_r − ∫₀¹(1−t)D²f̃(...)(Δx_r,Δx_r) dt
/// and reports the relative mismatch per row. Uses the bundle's exact second
/// derivative when present, the O(h²) stencil otherwise.
pub fn residual_recursion_check<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    outcome: &SolveOutcome<X>,
    smoother: Smoother<'_>,
) -> Result<RecursionReport> {
    let steps = outcome.deltas.len();
    let mut rows = Vec::with_capacity(steps);
    let mut max_mismatch = 0.0f64;
    let mut doubling = 0.0f64;
    for r in 0..steps {
        let x = &outcome.iterates[r];
        let z = &outcome.residuals[r];
        let dx = &outcome.deltas[r];
        let t_r = outcome.trace.rows[r].t;
        let w = bundle.inverse(x, z)?;
        let unsmoothed_part = w.sub(&smoother.apply(&w, t_r)?);
        let term1 = bundle.deriv(x, &unsmoothed_part)?;
        let integral = taylor_integral(bundle, x, dx, TAYLOR_QUADRATURE_NODES)?;
        if r == 0 {
            let fine = taylor_integral(bundle, x, dx, 2 * TAYLOR_QUADRATURE_NODES)?;
            let scale = integral.level_norm(0).max(f64::MIN_POSITIVE);
            doubling = fine.sub(&integral).level_norm(0) / scale;
        }
        let rhs = term1.sub(&integral);
        let z_next = &outcome.residuals[r + 1];
        let denom = z.level_norm(0).max(f64::MIN_POSITIVE);
        let mismatch = z_next.sub(&rhs).level_norm(0) / denom;
        max_mismatch = max_mismatch.max(mismatch);
        rows.push(RecursionRow { iter: r, mismatch });
    }
    Ok(RecursionReport {
        rows,
        max_mismatch,
        quadrature_doubling_delta: doubling,
    })
}
