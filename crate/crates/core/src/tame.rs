//! Nonlinear maps between graded spaces, packaged with their derivative,
//! family inverse and sampling callbacks, plus the probes that measure
//! differentiability remainders and empirical tame constants.
//!
//! The estimators replace the existential constants of the tame estimates by
//! measured suprema; the falsifiability criterion is stability under
//! doubling of the sample count, and instability is flagged, never hidden.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::GradedVector;
use crate::smoothing::SmoothingFamily;

/// A point of a graded space: enough vector-space structure for Newton
/// iterations, plus the norm scale and the action of the smoothing family.
pub trait GradedPoint: Clone {
    fn level_norm(&self, k: usize) -> f64;
    fn add_scaled(&self, other: &Self, a: f64) -> Self;
    fn zero_like(&self) -> Self;
    fn smooth(&self, family: &SmoothingFamily, t: f64) -> Result<Self>;

    fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, 1.0)
    }

    fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    fn scale(&self, a: f64) -> Self {
        self.zero_like().add_scaled(self, a)
    }
}

impl GradedPoint for GradedVector {
    fn level_norm(&self, k: usize) -> f64 {
        self.norm(k)
    }

    fn add_scaled(&self, other: &Self, a: f64) -> Self {
        GradedVector::add_scaled(self, other, a)
    }

    fn zero_like(&self) -> Self {
        GradedVector::zero(self.bandwidth())
    }

    fn smooth(&self, family: &SmoothingFamily, t: f64) -> Result<Self> {
        family.smooth(self, t)
    }
}

/// A point (b, u) of ℝ × E, the domain of the reparametrisation action.
/// The level norm is |b| + ‖u‖_k; smoothing acts on the function factor
/// only, the finite-dimensional factor is already maximally smooth.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPoint {
    pub shift: f64,
    pub fun: GradedVector,
}

impl GradedPoint for ActionPoint {
    fn level_norm(&self, k: usize) -> f64 {
        self.shift.abs() + self.fun.norm(k)
    }

    fn add_scaled(&self, other: &Self, a: f64) -> Self {
        ActionPoint {
            shift: self.shift + a * other.shift,
            fun: self.fun.add_scaled(&other.fun, a),
        }
    }

    fn zero_like(&self) -> Self {
        ActionPoint {
            shift: 0.0,
            fun: GradedVector::zero(self.fun.bandwidth()),
        }
    }

    fn smooth(&self, family: &SmoothingFamily, t: f64) -> Result<Self> {
        Ok(ActionPoint {
            shift: self.shift,
            fun: family.smooth(&self.fun, t)?,
        })
    }
}

pub type MapFn<X> = Box<dyn Fn(&X) -> Result<X>>;
pub type BilinearFn<X> = Box<dyn Fn(&X, &X) -> Result<X>>;
pub type TrilinearFn<X> = Box<dyn Fn(&X, &X, &X) -> Result<X>>;
pub type SamplerFn<X> = Box<dyn Fn(&mut ChaCha8Rng, f64, f64) -> X>;

/// A nonlinear map f with derivative Df, family inverse ψ of Df, optional
/// second derivative, a level-0 domain radius δ and the level offset k₀ of
/// the tame estimate for ψ.
pub struct TameMapBundle<X: GradedPoint> {
    pub name: String,
    /// δ: the level-0 ball on which the callbacks are certified.
    pub domain_radius: f64,
    /// k₀: the level shift in the tame estimate for ψ.
    pub offset: usize,
    /// Levels lost by Df in its base-point argument (metadata).
    pub deriv_loss: usize,
    eval: MapFn<X>,
    deriv: BilinearFn<X>,
    inverse: BilinearFn<X>,
    second: Option<TrilinearFn<X>>,
    sampler: SamplerFn<X>,
}

impl<X: GradedPoint> TameMapBundle<X> {
    pub fn new(
        name: impl Into<String>,
        domain_radius: f64,
        offset: usize,
        eval: MapFn<X>,
        deriv: BilinearFn<X>,
        inverse: BilinearFn<X>,
        sampler: SamplerFn<X>,
    ) -> Self {
        TameMapBundle {
            name: name.into(),
            domain_radius,
            offset,
            deriv_loss: 0,
            eval,
            deriv,
            inverse,
            second: None,
            sampler,
        }
    }

    pub fn with_second_deriv(mut self, second: TrilinearFn<X>) -> Self {
        self.second = Some(second);
        self
    }

    pub fn with_deriv_loss(mut self, loss: usize) -> Self {
        self.deriv_loss = loss;
        self
    }

    pub fn in_domain(&self, x: &X) -> bool {
        x.level_norm(0) < self.domain_radius
    }

    fn check_domain(&self, x: &X, context: &str) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::DomainExit {
                context: format!(
                    "{}: ‖x‖_0 = {:.6e} ≥ δ = {:.6e} ({context})",
                    self.name,
                    x.level_norm(0),
                    self.domain_radius
                ),
            })
        }
    }

    /// f(x), after the δ-ball membership test at level 0.
    pub fn eval(&self, x: &X) -> Result<X> {
        self.check_domain(x, "eval")?;
        (self.eval)(x)
    }

    /// Df(x)v.
    pub fn deriv(&self, x: &X, v: &X) -> Result<X> {
        self.check_domain(x, "deriv")?;
        (self.deriv)(x, v)
    }

    /// ψ(x)w, the solution v of Df(x)v = w.
    pub fn inverse(&self, x: &X, w: &X) -> Result<X> {
        self.check_domain(x, "inverse")?;
        (self.inverse)(x, w)
    }

    pub fn has_second_deriv(&self) -> bool {
        self.second.is_some()
    }

    /// D²f(x)(v, w), exact when provided, otherwise a central stencil on Df.
    pub fn second_deriv(&self, x: &X, v: &X, w: &X) -> Result<X> {
        self.check_domain(x, "second_deriv")?;
        match &self.second {
            Some(f) => f(x, v, w),
            None => finite_difference_second_derivative(self, x, v, w, 1e-4),
        }
    }

    /// Random point with level-0 norm of roughly the requested size.
    pub fn sample(&self, rng: &mut ChaCha8Rng, decay: f64, size: f64) -> X {
        (self.sampler)(rng, decay, size)
    }
}

/// Remainders ‖ (f(x+tu) − f(x))/t − Df(x)u ‖_j for each step size in
/// `t_seq`. Exits with an error naming the first t that leaves the domain.
pub fn probe_differentiability<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    x: &X,
    u: &X,
    level: usize,
    t_seq: &[f64],
) -> Result<Vec<f64>> {
    let fx = bundle.eval(x)?;
    let lu = bundle.deriv(x, u)?;
    let mut out = Vec::with_capacity(t_seq.len());
    for &t in t_seq {
        if t <= 0.0 {
            return Err(Error::InvalidParameter {
                context: format!("step t = {t} must be positive"),
            });
        }
        let xt = x.add_scaled(u, t);
        if !bundle.in_domain(&xt) {
            return Err(Error::DomainExit {
                context: format!("probe step t = {t} leaves the δ-ball"),
            });
        }
        let r = bundle.eval(&xt)?.sub(&fx).scale(1.0 / t).sub(&lu);
        out.push(r.level_norm(level));
    }
    Ok(out)
}

/// Central second difference of Df in direction `dir`, O(h²) accurate.
pub fn finite_difference_second_derivative<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    x: &X,
    v: &X,
    dir: &X,
    h: f64,
) -> Result<X> {
    let plus = bundle.deriv(&x.add_scaled(dir, h), v)?;
    let minus = bundle.deriv(&x.add_scaled(dir, -h), v)?;
    Ok(plus.sub(&minus).scale(0.5 / h))
}

/// Sampling decay exponents for all estimators.
pub const SAMPLE_DECAYS: [f64; 3] = [0.75, 1.5, 3.0];

/// Empirical suprema for one level of the modified tame estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TameRow {
    pub level: usize,
    /// sup ‖f(x)‖_j / ‖x‖_j
    pub a: f64,
    /// sup ‖Df(x)e‖_j / (‖x‖_j‖e‖_0 + ‖e‖_j)
    pub b: f64,
    /// sup ‖D²f(x)(e,ẽ)‖_j / (‖x‖_j‖e‖_0‖ẽ‖_0 + ‖e‖_j‖ẽ‖_0 + ‖e‖_0‖ẽ‖_j)
    pub c: Option<f64>,
    /// sup ‖ψ(x)e′‖_j / (‖x‖_{j+k₀}‖e′‖_{k₀} + ‖e′‖_{j+k₀})
    pub d: f64,
    /// All suprema moved by at most a factor 2 when the trial count doubled.
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TameConstants {
    pub name: String,
    pub offset: usize,
    pub trials: usize,
    pub rows: Vec<TameRow>,
}

impl TameConstants {
    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| r.stable)
    }

    /// CSV with header `name,j,a_j,b_j,c_j,d_j,stable_flag`; c_j is empty
    /// when the bundle has no second derivative.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,j,a_j,b_j,c_j,d_j,stable_flag\n");
        for r in &self.rows {
            let c = r.c.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.name, r.level, r.a, r.b, c, r.d, r.stable
            ));
        }
        out
    }
}

struct Sup {
    half: f64,
    full: f64,
}

impl Sup {
    fn new() -> Self {
        Sup {
            half: 0.0,
            full: 0.0,
        }
    }

    fn update(&mut self, value: f64, in_half: bool) {
        if value.is_finite() {
            if in_half {
                self.half = self.half.max(value);
            }
            self.full = self.full.max(value);
        }
    }

    fn stable(&self) -> bool {
        self.full.is_finite() && self.full <= 2.0 * self.half.max(f64::MIN_POSITIVE)
    }
}

/// Measures a_j, b_j, c_j, d_j over seeded samples in the δ-ball, running
/// the supremum at `trials` and 2·`trials` samples; a constant that moved by
/// more than a factor 2 between the two is flagged unstable. A missing
/// second derivative omits c_j.
pub fn estimate_tame_constants<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    levels: usize,
    trials: usize,
    seed: u64,
) -> Result<TameConstants> {
    if trials < 16 {
        return Err(Error::InvalidParameter {
            context: format!("trials = {trials} < 16"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let has_second = bundle.has_second_deriv();
    let k0 = bundle.offset;
    let mut a: Vec<Sup> = (0..=levels).map(|_| Sup::new()).collect();
    let mut b: Vec<Sup> = (0..=levels).map(|_| Sup::new()).collect();
    let mut c: Vec<Sup> = (0..=levels).map(|_| Sup::new()).collect();
    let mut d: Vec<Sup> = (0..=levels).map(|_| Sup::new()).collect();

    for trial in 0..2 * trials {
        let in_half = trial < trials;
        let decay = SAMPLE_DECAYS[trial % SAMPLE_DECAYS.len()];
        let x = bundle.sample(&mut rng, decay, 0.9 * bundle.domain_radius);
        let e = bundle.sample(&mut rng, SAMPLE_DECAYS[(trial + 1) % 3], 1.0);
        let et = bundle.sample(&mut rng, SAMPLE_DECAYS[(trial + 2) % 3], 1.0);
        let fx = bundle.eval(&x)?;
        let dfe = bundle.deriv(&x, &e)?;
        let psie = bundle.inverse(&x, &e)?;
        let d2 = if has_second {
            Some(bundle.second_deriv(&x, &e, &et)?)
        } else {
            None
        };
        for j in 0..=levels {
            let xn = x.level_norm(j);
            if xn > 0.0 {
                a[j].update(fx.level_norm(j) / xn, in_half);
            }
            let denom_b = x.level_norm(j) * e.level_norm(0) + e.level_norm(j);
            if denom_b > 0.0 {
                b[j].update(dfe.level_norm(j) / denom_b, in_half);
            }
            if let Some(d2v) = &d2 {
                let denom_c = x.level_norm(j) * e.level_norm(0) * et.level_norm(0)
                    + e.level_norm(j) * et.level_norm(0)
                    + e.level_norm(0) * et.level_norm(j);
                if denom_c > 0.0 {
                    c[j].update(d2v.level_norm(j) / denom_c, in_half);
                }
            }
            let denom_d = x.level_norm(j + k0) * e.level_norm(k0) + e.level_norm(j + k0);
            if denom_d > 0.0 {
                d[j].update(psie.level_norm(j) / denom_d, in_half);
            }
        }
    }

    let rows = (0..=levels)
        .map(|j| {
            let stable = a[j].stable()
                && b[j].stable()
                && d[j].stable()
                && (!has_second || c[j].stable());
            TameRow {
                level: j,
                a: a[j].full,
                b: b[j].full,
                c: if has_second { Some(c[j].full) } else { None },
                d: d[j].full,
                stable,
            }
        })
        .collect();

    Ok(TameConstants {
        name: bundle.name.clone(),
        offset: k0,
        trials,
        rows,
    })
}

/// Worst relative residuals of the identities Df(x)ψ(x)w = w and
/// ψ(x)Df(x)v = v at level 0 over seeded samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseConsistencyReport {
    pub name: String,
    pub trials: usize,
    /// sup ‖Df(x)ψ(x)w − w‖_0 / ‖w‖_0
    pub worst_forward: f64,
    /// sup ‖ψ(x)Df(x)v − v‖_0 / ‖v‖_0
    pub worst_backward: f64,
}

pub fn check_inverse_consistency<X: GradedPoint>(
    bundle: &TameMapBundle<X>,
    trials: usize,
    seed: u64,
) -> Result<InverseConsistencyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_forward = 0.0f64;
    let mut worst_backward = 0.0f64;
    for trial in 0..trials {
        let decay = SAMPLE_DECAYS[trial % SAMPLE_DECAYS.len()];
        let x = bundle.sample(&mut rng, decay, 0.9 * bundle.domain_radius);
        let w = bundle.sample(&mut rng, SAMPLE_DECAYS[(trial + 1) % 3], 1.0);
        let v = bundle.sample(&mut rng, SAMPLE_DECAYS[(trial + 2) % 3], 1.0);
        let wn = w.level_norm(0);
        if wn > 0.0 {
            let res = bundle
                .deriv(&x, &bundle.inverse(&x, &w)?)?
                .sub(&w)
                .level_norm(0);
            worst_forward = worst_forward.max(res / wn);
        }
        let vn = v.level_norm(0);
        if vn > 0.0 {
            let res = bundle
                .inverse(&x, &bundle.deriv(&x, &v)?)?
                .sub(&v)
                .level_norm(0);
            worst_backward = worst_backward.max(res / vn);
        }
    }
    Ok(InverseConsistencyReport {
        name: bundle.name.clone(),
        trials,
        worst_forward,
        worst_backward,
    })
}
