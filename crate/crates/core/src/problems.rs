//! Catalog of concrete maps and operators: the circle reparametrisation
//! action with its concentrated-bump counterexample, a quasilinear
//! derivative-losing map of Burgers type, elliptic model operators, and the
//! frozen solver instances used by the experiment harness.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::graded::{analyze, linear_fit, random_vector, GradedVector};
use crate::operators::{fredholm_inverse, realify, GradedOperator, DEFAULT_RANK_TOL};
use crate::solver::SolverConfig;
use crate::tame::{probe_differentiability, ActionPoint, SamplerFn, TameMapBundle};

/// Sampler drawing seeded random vectors with the requested decay, scaled so
/// the level-0 norm is uniform in (0.1, 1)·size.
pub fn graded_sampler(bandwidth: usize) -> SamplerFn<GradedVector> {
    Box::new(move |rng, decay, size| {
        let u = random_vector(rng.gen::<u64>(), bandwidth, decay);
        let target = size * rng.gen_range(0.1..1.0);
        let n0 = u.norm(0);
        u.scale(if n0 > 0.0 { target / n0 } else { 0.0 })
    })
}

// ---------------------------------------------------------------------------
// Bump family
// ---------------------------------------------------------------------------

/// A concentrated bump: a smooth compactly supported profile of width ~1/n,
/// k-fold antidifferentiated on the grid and windowed back to a periodic
/// function, then analyzed at the working bandwidth.
///
/// The height scaling √(2n) keeps the level-0 norm of the k = 0 member
/// bounded away from 0 and ∞ uniformly in n, while for k ≥ 1 the level-k
/// norm stays bounded and the level-(k+1) norm grows without bound — the
/// family that defeats uniform continuity of the reparametrisation action.
#[derive(Debug, Clone)]
pub struct BumpFamily {
    pub smoothness: usize,
    pub concentration: usize,
    pub vector: GradedVector,
}

/// Frozen bounds for the level-0 norm of the k = 0 bumps (build-time
/// calibration over n = 2..256 at bandwidth 512 gave 0.988..0.992).
pub const BUMP_LEVEL0_BOUNDS: (f64, f64) = (0.9, 1.1);

fn mollifier(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

fn smooth_step(s: f64) -> f64 {
    // C-infinity transition: 0 for s ≤ 0, 1 for s ≥ 1
    let sigma = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = sigma(s);
    let b = sigma(1.0 - s);
    a / (a + b)
}

/// Smooth window: 1 on [0.8, 5.3], C-infinity ramps to 0 on [0.3, 0.8] and
/// [5.3, 5.8], 0 near the wrap point θ = 0 ≡ 2π. The bump support
/// [π − π/n, π + π/n] (n ≥ 2) sits strictly inside the plateau, and the
/// window keeps superpolynomial spectral decay so the bump content, not the
/// window, dominates every level norm.
fn window(theta: f64) -> f64 {
    const A0: f64 = 0.3;
    const A1: f64 = 0.8;
    const B1: f64 = 5.3;
    const B0: f64 = 5.8;
    if theta <= A0 || theta >= B0 {
        0.0
    } else if theta < A1 {
        smooth_step((theta - A0) / (A1 - A0))
    } else if theta <= B1 {
        1.0
    } else {
        smooth_step((B0 - theta) / (B0 - B1))
    }
}

/// Builds u^k_n at the given bandwidth. Errors when the bump is narrower
/// than 4 grid cells of the implied collocation grid (unresolvable) or the
/// support would leave the window plateau (n < 2).
pub fn bump(smoothness: usize, concentration: usize, bandwidth: usize) -> Result<BumpFamily> {
    let n = concentration;
    if n < 2 {
        return Err(Error::InvalidParameter {
            context: format!("concentration {n} < 2 does not fit the window"),
        });
    }
    if (2 * bandwidth + 1) / n < 4 {
        return Err(Error::InvalidParameter {
            context: format!(
                "bump width 2π/{n} is below 4 grid cells at bandwidth {bandwidth}"
            ),
        });
    }
    let m = (8 * bandwidth).next_power_of_two().max(256);
    let dtheta = 2.0 * PI / m as f64;
    let height = (2.0 * n as f64).sqrt();
    let mut samples: Vec<f64> = (0..m)
        .map(|j| {
            let theta = dtheta * j as f64;
            height * mollifier((theta - PI) * n as f64 / PI)
        })
        .collect();
    for _ in 0..smoothness {
        let mut acc = 0.0;
        for s in samples.iter_mut() {
            acc += *s * dtheta;
            *s = acc;
        }
    }
    for (j, s) in samples.iter_mut().enumerate() {
        *s *= window(dtheta * j as f64);
    }
    let vector = analyze(&samples, bandwidth)?;
    Ok(BumpFamily {
        smoothness,
        concentration,
        vector,
    })
}

impl BumpFamily {
    /// The bump scaled to unit norm at the given level.
    pub fn normalized(&self, level: usize) -> GradedVector {
        let n = self.vector.norm(level);
        self.vector.scale(1.0 / n)
    }
}

// ---------------------------------------------------------------------------
// Reparametrisation action
// ---------------------------------------------------------------------------

/// The action Ψ(b, u) = (b, u(· + b)) on ℝ × E with derivative
/// DΨ(b, u)(e, v) = (e, e·u′(·+b) + v(·+b)). The derivative costs one level
/// of the base point u, which is the recorded derivative loss.
pub fn make_rotation_action(bandwidth: usize) -> TameMapBundle<ActionPoint> {
    let eval = move |p: &ActionPoint| -> Result<ActionPoint> {
        Ok(ActionPoint {
            shift: p.shift,
            fun: p.fun.rotate(p.shift),
        })
    };
    let deriv = move |p: &ActionPoint, d: &ActionPoint| -> Result<ActionPoint> {
        let advected = p.fun.differentiate().rotate(p.shift).scale(d.shift);
        Ok(ActionPoint {
            shift: d.shift,
            fun: advected.add(&d.fun.rotate(p.shift)),
        })
    };
    // DΨ(b,u)(e,v) = (ē, w̄) solves as e = ē, v = (w̄ − ē·u′(·+b))(· − b)
    let inverse = move |p: &ActionPoint, w: &ActionPoint| -> Result<ActionPoint> {
        let advected = p.fun.differentiate().rotate(p.shift).scale(w.shift);
        Ok(ActionPoint {
            shift: w.shift,
            fun: w.fun.sub(&advected).rotate(-p.shift),
        })
    };
    let second = move |p: &ActionPoint, d1: &ActionPoint, d2: &ActionPoint| -> Result<ActionPoint> {
        let uprime2 = p.fun.differentiate().differentiate().rotate(p.shift);
        let fun = uprime2
            .scale(d1.shift * d2.shift)
            .add(&d2.fun.differentiate().rotate(p.shift).scale(d1.shift))
            .add(&d1.fun.differentiate().rotate(p.shift).scale(d2.shift));
        Ok(ActionPoint { shift: 0.0, fun })
    };
    let sampler: SamplerFn<ActionPoint> = Box::new(move |rng, decay, size| {
        let shift = 0.3 * size * rng.gen_range(-1.0..1.0);
        let u = random_vector(rng.gen::<u64>(), bandwidth, decay);
        let target = 0.5 * size * rng.gen_range(0.1..1.0);
        let n0 = u.norm(0);
        ActionPoint {
            shift,
            fun: u.scale(if n0 > 0.0 { target / n0 } else { 0.0 }),
        }
    });
    TameMapBundle::new(
        "rotation-action",
        10.0,
        1,
        Box::new(eval),
        Box::new(deriv),
        Box::new(inverse),
        sampler,
    )
    .with_second_deriv(Box::new(second))
    .with_deriv_loss(1)
}

// ---------------------------------------------------------------------------
// Burgers-type quasilinear map
// ---------------------------------------------------------------------------

/// f(u) = u + ε·u·u′ with exact derivative Df(u)v = v + ε(u′v + uv′),
/// second derivative D²f(u)(v, w) = ε(vw)′, and ψ(u)w solving
/// (1 + εu′)v + εu v′ = w by a dense coefficient-space solve. ψ refuses
/// bases where the leading coefficient 1 + εu′ drops below 1/2 on the grid.
pub fn make_burgers_map(epsilon: f64, bandwidth: usize) -> Result<TameMapBundle<GradedVector>> {
    if !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            context: format!("epsilon = {epsilon}"),
        });
    }
    let eval = move |u: &GradedVector| -> Result<GradedVector> {
        let transport = u.pointwise_product(&u.differentiate())?;
        Ok(u.add_scaled(&transport, epsilon))
    };
    let deriv = move |u: &GradedVector, v: &GradedVector| -> Result<GradedVector> {
        let a = u.differentiate().pointwise_product(v)?;
        let b = u.pointwise_product(&v.differentiate())?;
        Ok(v.add_scaled(&a.add(&b), epsilon))
    };
    let second = move |_u: &GradedVector, v: &GradedVector, w: &GradedVector| -> Result<GradedVector> {
        Ok(v.pointwise_product(w)?.differentiate().scale(epsilon))
    };
    let diff_op = GradedOperator::differentiation(bandwidth);
    let inverse = move |u: &GradedVector, w: &GradedVector| -> Result<GradedVector> {
        // ellipticity check of the leading coefficient on the dealiased grid
        let grid = (3 * bandwidth + 1).next_power_of_two();
        let uprime = u.differentiate();
        let min_coeff = uprime
            .eval_on_grid(grid)?
            .iter()
            .map(|c| 1.0 + epsilon * c.re)
            .fold(f64::INFINITY, f64::min);
        if min_coeff < 0.5 {
            return Err(Error::DomainExit {
                context: format!("1 + εu′ reaches {min_coeff:.3} < 1/2 on the grid"),
            });
        }
        let m_uprime = GradedOperator::multiplication_by(&uprime)?;
        let m_u = GradedOperator::multiplication_by(u)?;
        let a = GradedOperator::identity(bandwidth)
            .add(&m_uprime.add(&m_u.compose(&diff_op)?)?.scale(epsilon))?;
        let rhs = nalgebra::DVector::from_column_slice(w.coeffs());
        match a.matrix().clone().lu().solve(&rhs) {
            Some(sol) => Ok(realify(
                GradedVector::new(bandwidth, sol.iter().copied().collect(), false)?,
                1e-12,
            )),
            None => Err(Error::SingularSystem {
                context: "transport operator".into(),
            }),
        }
    };
    // the certified domain is the δ-ball intersected with the ellipticity
    // margin ε·sup|u′| ≤ 0.4; rough samples are rescaled into it
    let sampler: SamplerFn<GradedVector> = Box::new(move |rng, decay, size| {
        let u = random_vector(rng.gen::<u64>(), bandwidth, decay);
        let target = size * rng.gen_range(0.1..1.0);
        let n0 = u.norm(0);
        let mut scaled = u.scale(if n0 > 0.0 { target / n0 } else { 0.0 });
        if epsilon != 0.0 {
            let grid = (3 * bandwidth + 1).next_power_of_two();
            let sup = scaled
                .differentiate()
                .eval_on_grid(grid)
                .expect("grid is large enough")
                .iter()
                .map(|c| c.re.abs())
                .fold(0.0f64, f64::max);
            if epsilon.abs() * sup > 0.4 {
                scaled = scaled.scale(0.4 / (epsilon.abs() * sup));
            }
        }
        scaled
    });
    Ok(TameMapBundle::new(
        format!("burgers(eps={epsilon})"),
        1.0,
        1,
        Box::new(eval),
        Box::new(deriv),
        Box::new(inverse),
        sampler,
    )
    .with_second_deriv(Box::new(second))
    .with_deriv_loss(1))
}

/// The Burgers map plus the rank-1 strongly smoothing perturbation
/// −⟨u, k₀⟩·k₀ with a smooth unit vector k₀, which forces Df(0) = id − P_{k₀}
/// to have a one-dimensional kernel and cokernel at the base point 0.
pub fn make_perturbed_burgers(
    epsilon: f64,
    bandwidth: usize,
    kernel_seed: u64,
) -> Result<TameMapBundle<GradedVector>> {
    let raw = random_vector(kernel_seed, bandwidth, 4.0);
    let k0 = raw.scale(1.0 / raw.norm(0));
    let base = make_burgers_map(epsilon, bandwidth)?;

    let k_eval = k0.clone();
    let k_deriv = k0.clone();
    let base_rc = std::rc::Rc::new(base);
    let b_eval = base_rc.clone();
    let b_deriv = base_rc.clone();
    let b_second = base_rc.clone();

    let eval = move |u: &GradedVector| -> Result<GradedVector> {
        let f = b_eval.eval(u)?;
        Ok(f.add_scaled_complex(&k_eval, -u.inner0(&k_eval)))
    };
    let deriv = move |u: &GradedVector, v: &GradedVector| -> Result<GradedVector> {
        let d = b_deriv.deriv(u, v)?;
        Ok(d.add_scaled_complex(&k_deriv, -v.inner0(&k_deriv)))
    };
    let second = move |u: &GradedVector, v: &GradedVector, w: &GradedVector| -> Result<GradedVector> {
        // the perturbation is linear, so it drops out of D²
        b_second.second_deriv(u, v, w)
    };
    Ok(TameMapBundle::new(
        format!("burgers(eps={epsilon})+rank1(seed={kernel_seed})"),
        1.0,
        1,
        Box::new(eval),
        Box::new(deriv),
        Box::new(|_x: &GradedVector, _w: &GradedVector| {
            Err(Error::SingularSystem {
                context: "derivative is singular at the base point by construction".into(),
            })
        }),
        graded_sampler(bandwidth),
    )
    .with_second_deriv(Box::new(second))
    .with_deriv_loss(1))
}

/// Linear bundle wrapping a fixed operator: f(u) = Au, ψ = the Fredholm
/// pseudo-inverse (exact off the kernel/cokernel).
pub fn make_operator_bundle(op: GradedOperator, domain_radius: f64) -> TameMapBundle<GradedVector> {
    let bandwidth = op.bandwidth();
    let pinv = fredholm_inverse(&op, DEFAULT_RANK_TOL).expect("rank tolerance is valid");
    let a_eval = op.clone();
    let a_deriv = op;
    let name = format!("linear[{}]", a_eval.label());
    TameMapBundle::new(
        name,
        domain_radius,
        0,
        Box::new(move |u: &GradedVector| a_eval.apply(u)),
        Box::new(move |_x: &GradedVector, v: &GradedVector| a_deriv.apply(v)),
        Box::new(move |_x: &GradedVector, w: &GradedVector| pinv.apply(w)),
        graded_sampler(bandwidth),
    )
    .with_second_deriv(Box::new(|x: &GradedVector, _v: &GradedVector, _w: &GradedVector| {
        Ok(GradedVector::zero(x.bandwidth()))
    }))
}

// ---------------------------------------------------------------------------
// Elliptic model operator
// ---------------------------------------------------------------------------

/// A = −d²/dθ² + multiplication by V, order 2, assembled in coefficient
/// space with dealiased products.
pub fn make_elliptic_operator(potential: &GradedVector) -> Result<GradedOperator> {
    let bandwidth = potential.bandwidth();
    let laplace = GradedOperator::diagonal(
        bandwidth,
        |n| Complex64::new((n * n) as f64, 0.0),
        2,
        "-d2",
    );
    let mult = GradedOperator::multiplication_by(potential)?;
    let m = laplace.matrix() + mult.matrix();
    Ok(GradedOperator::from_matrix(m, 2, "elliptic"))
}

// ---------------------------------------------------------------------------
// Non-uniform continuity experiment
// ---------------------------------------------------------------------------

/// Required separation ‖Ψ(t, u_n) − Ψ(0, u_n)‖_k for unit-norm bumps beyond
/// the disjoint-support threshold; the exact disjoint value is √2 and the
/// floor leaves margin for the residual overlap at the threshold.
pub const SEPARATION_FLOOR: f64 = 1.3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcRow {
    pub concentration: usize,
    /// ‖Ψ(t, u_n) − Ψ(0, u_n)‖_k for the unit-level-k bump, when resolvable.
    pub separation: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcReport {
    pub level: usize,
    /// Rotation shift in radians; this is the whole input offset (t, 0).
    pub shift: f64,
    pub bandwidth: usize,
    /// Bumps with n ≥ threshold have support disjoint from their shift.
    pub threshold: usize,
    pub parameter_offset_norm: f64,
    pub rows: Vec<UcRow>,
    pub min_separation_beyond_threshold: Option<f64>,
    pub floor: f64,
    pub pass: bool,
}

impl UcReport {
    /// CSV with header `n,separation,resolvable`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,separation,resolvable\n");
        for r in &self.rows {
            match r.separation {
                Some(d) => out.push_str(&format!("{},{},true\n", r.concentration, d)),
                None => out.push_str(&format!("{},,false\n", r.concentration)),
            }
        }
        out
    }
}

/// Rotates unit-norm bumps by a fixed shift and reports the separation
/// d_n = ‖Ψ(t, u_n) − Ψ(0, u_n)‖_k. While the input offset (t, 0) stays the
/// same small constant, every bump concentrated beyond the disjoint-support
/// threshold is displaced by a full unit — the mechanism that defeats local
/// uniform continuity of the action.
pub fn uniform_continuity_failure_experiment(
    level: usize,
    shift: f64,
    n_max: usize,
    bandwidth: usize,
) -> Result<UcReport> {
    if shift < 0.0 {
        return Err(Error::InvalidParameter {
            context: format!("shift {shift} must be nonnegative"),
        });
    }
    let threshold = if shift > 0.0 {
        (2.0 * PI / shift).ceil() as usize
    } else {
        usize::MAX
    };
    let mut rows = Vec::new();
    let mut min_beyond: Option<f64> = None;
    for n in 2..=n_max {
        match bump(level, n, bandwidth) {
            Ok(b) => {
                let u = b.normalized(level);
                let d = u.rotate(shift).sub(&u).norm(level);
                if n >= threshold {
                    min_beyond = Some(min_beyond.map_or(d, |m: f64| m.min(d)));
                }
                rows.push(UcRow {
                    concentration: n,
                    separation: Some(d),
                    note: None,
                });
            }
            Err(e) => rows.push(UcRow {
                concentration: n,
                separation: None,
                note: Some(e.to_string()),
            }),
        }
    }
    let pass = match min_beyond {
        Some(m) => m >= SEPARATION_FLOOR,
        None => shift == 0.0,
    };
    Ok(UcReport {
        level,
        shift,
        bandwidth,
        threshold,
        parameter_offset_norm: shift,
        rows,
        min_separation_beyond_threshold: min_beyond,
        floor: SEPARATION_FLOOR,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Derivative-loss probe
// ---------------------------------------------------------------------------

/// Frozen build-time calibration: lower bound for the rough-direction
/// remainder curve over t ∈ [1e−4, 1e−1] at the fixture parameters (the
/// observed minimum at level 2 was 1.10; the floor keeps a 2× margin).
pub const DERIVATIVE_LOSS_FLOOR: f64 = 0.5;

/// Log-log slope window certifying linear decay of the smooth-direction
/// remainder.
pub const SMOOTH_SLOPE_BAND: (f64, f64) = (0.8, 1.2);

/// At a fixed bandwidth the frequency cutoff regularises every direction:
/// once t ≲ 1/N each remainder decays linearly no matter how rough the base
/// point. Each curve is therefore probed at the bandwidth where the
/// mechanism it demonstrates is visible across the whole t-window: the
/// rough curve needs enough resolution that some bump stays concentrated
/// relative to every step size, the smooth curve needs all modes inside the
/// linear regime N·t ≲ 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeLossParams {
    pub rough_bandwidth: usize,
    pub smooth_bandwidth: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_count: usize,
    /// Random base points per curve, on top of the bump bases.
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for DerivativeLossParams {
    fn default() -> Self {
        DerivativeLossParams {
            rough_bandwidth: 512,
            smooth_bandwidth: 16,
            t_lo: 1e-4,
            t_hi: 1e-1,
            t_count: 31,
            ensemble: 4,
            seed: 20_250_101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeLossReport {
    pub level: usize,
    pub rough_bandwidth: usize,
    pub smooth_bandwidth: usize,
    pub ts: Vec<f64>,
    /// max over unit-level-j bases of decay j + 0.75 (plus bump bases) of
    /// the remainder at level j.
    pub rough_curve: Vec<f64>,
    /// max over unit-level-j bases of decay j + 1.75 of the remainder.
    pub smooth_curve: Vec<f64>,
    pub smooth_slope: f64,
    pub smooth_r_squared: f64,
    pub rough_min: f64,
    pub floor: f64,
    pub rough_bounded_below: bool,
    pub smooth_slope_in_band: bool,
}

impl DerivativeLossReport {
    /// CSV with header `t,rough_remainder,smooth_remainder`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rough_remainder,smooth_remainder\n");
        for i in 0..self.ts.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.ts[i], self.rough_curve[i], self.smooth_curve[i]
            ));
        }
        out
    }
}

/// Probes the differentiability of the action at base points (0, u) in the
/// parameter direction (1, 0): the remainder at level j stays bounded below
/// when u carries only fractionally more than j levels, and decays linearly
/// in t when u carries almost two extra levels. All base points are scaled
/// to unit level-j norm so the curves are comparable.
pub fn derivative_loss_probe(level: usize, n_max: usize) -> Result<DerivativeLossReport> {
    derivative_loss_probe_with(level, n_max, &DerivativeLossParams::default())
}

pub fn derivative_loss_probe_with(
    level: usize,
    n_max: usize,
    params: &DerivativeLossParams,
) -> Result<DerivativeLossReport> {
    let ts: Vec<f64> = (0..params.t_count)
        .map(|i| {
            let frac = i as f64 / (params.t_count - 1) as f64;
            params.t_lo * (params.t_hi / params.t_lo).powf(frac)
        })
        .collect();

    let curve_for = |bandwidth: usize, bases: &[GradedVector]| -> Result<Vec<f64>> {
        let bundle = make_rotation_action(bandwidth);
        let direction = ActionPoint {
            shift: 1.0,
            fun: GradedVector::zero(bandwidth),
        };
        let mut curve = vec![0.0f64; ts.len()];
        for base in bases {
            let point = ActionPoint {
                shift: 0.0,
                fun: base.clone(),
            };
            let remainders = probe_differentiability(&bundle, &point, &direction, level, &ts)?;
            for (c, r) in curve.iter_mut().zip(remainders.iter()) {
                *c = c.max(*r);
            }
        }
        Ok(curve)
    };

    let mut rough_bases: Vec<GradedVector> = (0..params.ensemble)
        .map(|i| {
            let u = random_vector(
                params.seed.wrapping_add(i as u64),
                params.rough_bandwidth,
                level as f64 + 0.75,
            );
            u.scale(1.0 / u.norm(level))
        })
        .collect();
    // geometrically spaced concentrations so some bump stays narrow
    // relative to every step size in the window
    let mut n = 3usize;
    while n <= n_max {
        if let Ok(b) = bump(level, n, params.rough_bandwidth) {
            rough_bases.push(b.normalized(level));
        }
        n = (n * 3).div_ceil(2);
    }
    let smooth_bases: Vec<GradedVector> = (0..params.ensemble)
        .map(|i| {
            let u = random_vector(
                params.seed.wrapping_add(100 + i as u64),
                params.smooth_bandwidth,
                level as f64 + 1.75,
            );
            u.scale(1.0 / u.norm(level))
        })
        .collect();

    let rough_curve = curve_for(params.rough_bandwidth, &rough_bases)?;
    let smooth_curve = curve_for(params.smooth_bandwidth, &smooth_bases)?;

    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let log_s: Vec<f64> = smooth_curve.iter().map(|r| r.max(1e-300).ln()).collect();
    let (smooth_slope, _, smooth_r2) = linear_fit(&log_t, &log_s);
    let rough_min = rough_curve.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(DerivativeLossReport {
        level,
        rough_bandwidth: params.rough_bandwidth,
        smooth_bandwidth: params.smooth_bandwidth,
        ts,
        rough_curve,
        smooth_curve,
        smooth_slope,
        smooth_r_squared: smooth_r2,
        rough_min,
        floor: DERIVATIVE_LOSS_FLOOR,
        rough_bounded_below: rough_min >= DERIVATIVE_LOSS_FLOOR,
        smooth_slope_in_band: smooth_slope >= SMOOTH_SLOPE_BAND.0
            && smooth_slope <= SMOOTH_SLOPE_BAND.1,
    })
}

// ---------------------------------------------------------------------------
// Frozen solver instances
// ---------------------------------------------------------------------------

/// A reproducible Burgers solve: all parameters needed to rebuild the
/// bundle, the target and the solver configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveInstance {
    pub name: String,
    pub bandwidth: usize,
    pub levels: usize,
    pub epsilon: f64,
    pub target_decay: f64,
    pub target_norm0: f64,
    pub target_seed: u64,
    pub mu: f64,
    pub base: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub guard: f64,
}

impl SolveInstance {
    pub fn bundle(&self) -> Result<TameMapBundle<GradedVector>> {
        make_burgers_map(self.epsilon, self.bandwidth)
    }

    pub fn target(&self) -> GradedVector {
        let y = random_vector(self.target_seed, self.bandwidth, self.target_decay);
        y.scale(self.target_norm0 / y.norm(0))
    }

    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            p: 0,
            offset: 1,
            mu: self.mu,
            base: self.base,
            max_iter: self.max_iter,
            tol: self.tol,
            guard: self.guard,
            levels: self.levels,
        }
    }
}

/// The fixed smooth-target instance: ε = 0.1, N = 64, K = 4, smooth target
/// with ‖y‖_0 = 10⁻², μ = 16ρ = 48 for p = 0, k₀ = 1.
pub fn acceptance_instance() -> SolveInstance {
    SolveInstance {
        name: "burgers-acceptance".into(),
        bandwidth: 64,
        levels: 4,
        epsilon: 0.1,
        target_decay: 6.0,
        target_norm0: 1e-2,
        target_seed: 7_031,
        mu: 48.0,
        base: 1.5,
        tol: 1e-12,
        max_iter: 40,
        guard: 10.0,
    }
}

/// The frozen rough-target stress instance; the authoritative copy lives in
/// `fixtures/stress_instance.json` next to its calibration log.
pub fn stress_instance() -> SolveInstance {
    serde_json::from_str(include_str!("../fixtures/stress_instance.json"))
        .expect("fixture parses")
}

/// Frozen parameters of the rank-1-perturbed Burgers reduction fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionFixture {
    pub epsilon: f64,
    pub bandwidth: usize,
    pub kernel_seed: u64,
    pub samples: usize,
    pub sample_radius: f64,
    pub sample_seed: u64,
}

pub fn reduction_fixture() -> ReductionFixture {
    ReductionFixture {
        epsilon: 0.1,
        bandwidth: 32,
        kernel_seed: 2_026,
        samples: 50,
        sample_radius: 0.03,
        sample_seed: 88,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::SmoothingFamily;
    use crate::solver::{plain_newton, solve, SolveStatus};
    use crate::tame::GradedPoint;
    use crate::{analyze_fredholm, DEFAULT_RANK_TOL};
    use approx::assert_relative_eq;

    #[test]
    fn action_fixes_the_zero_shift() {
        let a = make_rotation_action(16);
        let u = random_vector(1, 16, 1.0).scale(0.1);
        let p = ActionPoint {
            shift: 0.0,
            fun: u.clone(),
        };
        let out = a.eval(&p).unwrap();
        assert_eq!(out.shift, 0.0);
        assert!(out.fun.sub(&u).norm(0) < 1e-15);
    }

    #[test]
    fn action_by_pi_flips_cosine() {
        let a = make_rotation_action(8);
        let p = ActionPoint {
            shift: PI,
            fun: GradedVector::cosine(8, 1),
        };
        let out = a.eval(&p).unwrap();
        assert!(out.fun.add(&GradedVector::cosine(8, 1)).norm(0) < 1e-13);
    }

    #[test]
    fn action_derivative_matches_stencil_at_second_order() {
        let a = make_rotation_action(16);
        let base = ActionPoint {
            shift: 0.3,
            fun: random_vector(5, 16, 4.0).scale(0.2),
        };
        let dir = ActionPoint {
            shift: 0.7,
            fun: random_vector(6, 16, 4.0).scale(0.2),
        };
        let exact = a.deriv(&base, &dir).unwrap();
        let err_at = |h: f64| {
            let plus = a.eval(&base.add_scaled(&dir, h)).unwrap();
            let minus = a.eval(&base.add_scaled(&dir, -h)).unwrap();
            plus.sub(&minus).scale(0.5 / h).sub(&exact).level_norm(0)
        };
        let e1 = err_at(1e-2);
        let e2 = err_at(5e-3);
        assert!(e1 / e2 > 3.5, "O(h²) stencil agreement failed: {}", e1 / e2);
    }

    #[test]
    fn action_linear_slice_has_zero_remainder() {
        let a = make_rotation_action(16);
        let base = ActionPoint {
            shift: 0.4,
            fun: random_vector(7, 16, 1.0).scale(0.1),
        };
        let dir = ActionPoint {
            shift: 0.0,
            fun: random_vector(8, 16, 1.0).scale(0.1),
        };
        let rs = probe_differentiability(&a, &base, &dir, 0, &[0.1, 0.01]).unwrap();
        for r in rs {
            assert!(r < 1e-14);
        }
    }

    #[test]
    fn action_inverse_is_exact() {
        let a = make_rotation_action(16);
        let base = ActionPoint {
            shift: 0.2,
            fun: random_vector(9, 16, 2.0).scale(0.3),
        };
        let w = ActionPoint {
            shift: 0.5,
            fun: random_vector(10, 16, 1.0).scale(0.2),
        };
        let v = a.inverse(&base, &w).unwrap();
        let back = a.deriv(&base, &v).unwrap();
        assert!(back.sub(&w).level_norm(0) < 1e-13);
    }

    #[test]
    fn bump_level0_norms_stay_in_frozen_bounds() {
        for n in [2usize, 3, 5, 8, 13, 21, 34, 55] {
            let b = bump(0, n, 512).unwrap();
            let norm = b.vector.norm(0);
            assert!(
                norm >= BUMP_LEVEL0_BOUNDS.0 && norm <= BUMP_LEVEL0_BOUNDS.1,
                "n = {n}: ‖u⁰_n‖₀ = {norm}"
            );
        }
    }

    #[test]
    fn bumps_with_disjoint_supports_have_tiny_products() {
        let shift = 0.1 * 2.0 * PI;
        for n in [10usize, 15, 25, 40] {
            let b = bump(0, n, 512).unwrap();
            let u = b.vector.clone();
            let rotated = u.rotate(shift);
            let product = u.pointwise_product(&rotated).unwrap();
            assert!(
                product.norm(0) <= 1e-3 * u.norm(0) * rotated.norm(0),
                "n = {n}: overlap {}",
                product.norm(0)
            );
        }
    }

    #[test]
    fn bump_norms_split_into_bounded_and_growing_levels() {
        // smoothness 0: level-0 norms uniformly bounded, level-1 norms grow
        // without bound in the concentration
        let small = bump(0, 6, 256).unwrap().vector;
        let large = bump(0, 48, 256).unwrap().vector;
        assert!((small.norm(0) / large.norm(0) - 1.0).abs() < 0.1);
        assert!(large.norm(1) > 4.0 * small.norm(1));

        // one antiderivative shifts the split up: level-1 stays bounded
        // while level-3 keeps growing
        let small = bump(1, 12, 256).unwrap().vector;
        let large = bump(1, 48, 256).unwrap().vector;
        assert!(large.norm(1) < 1.5 * small.norm(1));
        assert!(large.norm(3) > 4.0 * small.norm(3));
    }

    #[test]
    fn bump_rejects_unresolvable_concentration() {
        assert!(matches!(
            bump(0, 40, 16),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(bump(0, 1, 64), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn uc_experiment_zero_shift_is_flat() {
        let rep = uniform_continuity_failure_experiment(0, 0.0, 8, 64).unwrap();
        for row in &rep.rows {
            if let Some(d) = row.separation {
                assert!(d < 1e-12);
            }
        }
    }

    #[test]
    fn uc_experiment_separates_beyond_threshold() {
        let rep =
            uniform_continuity_failure_experiment(0, 0.1 * 2.0 * PI, 16, 128).unwrap();
        assert_eq!(rep.threshold, 10);
        assert!(rep.pass, "min separation {:?}", rep.min_separation_beyond_threshold);
        let min = rep.min_separation_beyond_threshold.unwrap();
        // disjoint supports: d_n ≈ √2 for unit bumps
        assert!((SEPARATION_FLOOR..=1.5).contains(&min), "min {min}");
        let csv = rep.to_csv();
        assert!(csv.starts_with("n,separation,resolvable\n"));
    }

    #[test]
    fn burgers_eval_matches_grid_oracle() {
        let eps = 0.25;
        let b = make_burgers_map(eps, 16).unwrap();
        let u = GradedVector::cosine(16, 1).scale(0.5);
        let got = b.eval(&u).unwrap();
        // u·u′ for u = c·cos θ is −c²·sin θ cos θ = −(c²/2)·sin 2θ
        let expected = u.add(&GradedVector::sine(16, 2).scale(-eps * 0.25 * 0.5));
        assert!(got.sub(&expected).norm(0) < 1e-14);

        // independent oracle: evaluate on the grid and re-analyze
        let grid = 64;
        let us = u.synthesize(grid).unwrap();
        let ups = u.differentiate().synthesize(grid).unwrap();
        let prod: Vec<f64> = us
            .iter()
            .zip(ups.iter())
            .map(|(a, b)| a + eps * a * b)
            .collect();
        let oracle = analyze(&prod, 16).unwrap();
        assert!(got.sub(&oracle).norm(0) < 1e-13);
    }

    #[test]
    fn burgers_inverse_residuals_are_tiny() {
        let b = make_burgers_map(0.1, 32).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let _ = &mut rng;
        let x = random_vector(4, 32, 2.0).scale(0.5);
        let w = random_vector(5, 32, 1.0);
        let v = b.inverse(&x, &w).unwrap();
        let res = b.deriv(&x, &v).unwrap().sub(&w).norm(0) / w.norm(0);
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn burgers_with_zero_epsilon_is_identity_and_solves_in_one_step() {
        let b = make_burgers_map(0.0, 16).unwrap();
        let y = random_vector(6, 16, 2.0).scale(0.01);
        let out = plain_newton(&b, &y, &SolverConfig::recommended(0, 1, 2, 1.0)).unwrap();
        assert_eq!(out.trace.status, SolveStatus::Converged);
        assert_eq!(out.trace.rows.len(), 2);
        assert!(out.x.sub(&y).norm(0) < 1e-14);
    }

    #[test]
    fn burgers_rejects_degenerate_leading_coefficient() {
        // sup |u′| ≈ 16 · 0.8 for u = 0.8·cos 16θ... large enough to break
        // 1 + εu′ ≥ 1/2 at ε = 0.1
        let b = make_burgers_map(0.1, 32).unwrap();
        let u = GradedVector::cosine(32, 16).scale(0.8);
        let w = GradedVector::constant(32, 1.0);
        assert!(matches!(b.inverse(&u, &w), Err(Error::DomainExit { .. })));
    }

    #[test]
    fn elliptic_operator_catalog() {
        let one = GradedVector::constant(16, 1.0);
        let a = make_elliptic_operator(&one).unwrap();
        let rep = analyze_fredholm(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((rep.dim_ker, rep.dim_coker, rep.index), (0, 0, 0));

        let zero = GradedVector::zero(16);
        let a = make_elliptic_operator(&zero).unwrap();
        let rep = analyze_fredholm(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((rep.dim_ker, rep.dim_coker, rep.index), (1, 1, 0));

        let neg = GradedVector::constant(16, -1.0);
        let a = make_elliptic_operator(&neg).unwrap();
        let rep = analyze_fredholm(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((rep.dim_ker, rep.dim_coker, rep.index), (2, 2, 0));
    }

    #[test]
    fn rotation_action_is_isometric_so_a_constants_are_one() {
        let a = make_rotation_action(16);
        // ‖Ψ(b, u)‖_k = |b| + ‖u‖_k exactly
        let p = ActionPoint {
            shift: 0.37,
            fun: random_vector(12, 16, 1.0).scale(0.4),
        };
        let out = a.eval(&p).unwrap();
        for k in 0..=4 {
            assert_relative_eq!(out.level_norm(k), p.level_norm(k), max_relative = 1e-13);
        }
    }

    #[test]
    fn acceptance_instance_converges_fast() {
        let inst = acceptance_instance();
        let bundle = inst.bundle().unwrap();
        let y = inst.target();
        assert_relative_eq!(y.norm(0), 1e-2, max_relative = 1e-12);
        let family = SmoothingFamily::sharp();
        let out = solve(&bundle, &y, &inst.config(), &family).unwrap();
        assert_eq!(out.trace.status, SolveStatus::Converged);
        assert!(out.trace.rows.len() <= 9, "{} rows", out.trace.rows.len());
        assert!(out.trace.final_residual0().unwrap() < 1e-10);
        // level-wise closure at graded tolerance
        let last = out.trace.rows.last().unwrap();
        for j in 0..=4usize {
            let cap = inst.tol * 10f64.powi(j as i32);
            assert!(last.z_norms[j] <= cap, "level {j}: {} > {cap}", last.z_norms[j]);
        }
    }

    #[test]
    fn burgers_tame_constants_stable_at_sixty_four_trials() {
        let bundle = make_burgers_map(0.1, 32).unwrap();
        let tc = crate::tame::estimate_tame_constants(&bundle, 4, 64, 17).unwrap();
        for row in &tc.rows {
            assert!(row.a.is_finite() && row.b.is_finite() && row.d.is_finite());
            assert!(row.c.unwrap().is_finite());
            assert!(row.stable, "level {} unstable", row.level);
        }
    }

    #[test]
    fn catalog_bundles_have_consistent_inverses() {
        let burgers = make_burgers_map(0.1, 32).unwrap();
        let rep = crate::tame::check_inverse_consistency(&burgers, 24, 5).unwrap();
        assert!(rep.worst_forward <= 1e-9, "forward {}", rep.worst_forward);
        assert!(rep.worst_backward <= 1e-9, "backward {}", rep.worst_backward);

        let action = make_rotation_action(32);
        let rep = crate::tame::check_inverse_consistency(&action, 24, 6).unwrap();
        assert!(rep.worst_forward <= 1e-9);
        assert!(rep.worst_backward <= 1e-9);
    }
}
