//! Bandwidth-limited periodic functions on the circle, stored as Fourier
//! coefficients and carrying the whole family of weighted norms
//!
//! ```text
//!     ‖u‖_k = ( Σ_n w(n)^{2k} |û_n|² )^{1/2},   w(n) = 1 + |n|.
//! ```
//!
//! Since w(n) ≥ 1 the norms increase with the level, the inclusion of level
//! k+1 into level k has operator norm 1, and one coefficient array models the
//! whole nested family of spaces at once.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative tolerance for the Hermitian-symmetry invariant of real vectors.
pub const HERMITIAN_TOL: f64 = 1e-14;

/// Frequency weight w(n) = 1 + |n|.
#[inline]
pub fn weight(n: i64) -> f64 {
    1.0 + n.unsigned_abs() as f64
}

/// A periodic function as truncated Fourier coefficients û_n, n ∈ [−N, N].
#[derive(Debug, Clone, PartialEq)]
pub struct GradedVector {
    /// Coefficients ordered n = −N..N, so `coeffs[i]` is û_{i−N}.
    coeffs: Vec<Complex64>,
    bandwidth: usize,
    real_flag: bool,
}

impl GradedVector {
    /// Builds a vector from coefficients ordered n = −N..N.
    ///
    /// With `real_flag` set, Hermitian symmetry û_{−n} = conj(û_n) is
    /// required to hold within `HERMITIAN_TOL` relative to the largest
    /// coefficient, and is then enforced exactly by averaging.
    pub fn new(bandwidth: usize, coeffs: Vec<Complex64>, real_flag: bool) -> Result<Self> {
        if coeffs.len() != 2 * bandwidth + 1 {
            return Err(Error::CoefficientCount {
                len: coeffs.len(),
                bandwidth,
            });
        }
        let mut v = GradedVector {
            coeffs,
            bandwidth,
            real_flag,
        };
        if real_flag {
            v.check_hermitian()?;
            v.symmetrize();
        }
        Ok(v)
    }

    /// The zero vector, flagged real.
    pub fn zero(bandwidth: usize) -> Self {
        GradedVector {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * bandwidth + 1],
            bandwidth,
            real_flag: true,
        }
    }

    /// The constant function with value `c`.
    pub fn constant(bandwidth: usize, c: f64) -> Self {
        let mut v = Self::zero(bandwidth);
        v.coeffs[bandwidth] = Complex64::new(c, 0.0);
        v
    }

    /// A single unit mode e^{inθ} (not real unless n = 0).
    pub fn unit_mode(bandwidth: usize, n: i64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * bandwidth + 1];
        coeffs[(n + bandwidth as i64) as usize] = Complex64::new(1.0, 0.0);
        GradedVector {
            coeffs,
            bandwidth,
            real_flag: n == 0,
        }
    }

    /// cos(mθ) at the given bandwidth.
    pub fn cosine(bandwidth: usize, m: u32) -> Self {
        let mut v = Self::zero(bandwidth);
        let m = m as i64;
        if m == 0 {
            return Self::constant(bandwidth, 1.0);
        }
        let half = Complex64::new(0.5, 0.0);
        *v.coeff_mut(m) = half;
        *v.coeff_mut(-m) = half;
        v
    }

    /// sin(mθ) at the given bandwidth.
    pub fn sine(bandwidth: usize, m: u32) -> Self {
        let mut v = Self::zero(bandwidth);
        let m = m as i64;
        if m == 0 {
            return v;
        }
        *v.coeff_mut(m) = Complex64::new(0.0, -0.5);
        *v.coeff_mut(-m) = Complex64::new(0.0, 0.5);
        v
    }

    /// Builds a real vector from the coefficients for n = 0..N; negative
    /// modes are filled in by conjugation.
    pub fn from_half_spectrum(bandwidth: usize, half: &[Complex64]) -> Result<Self> {
        if half.len() != bandwidth + 1 {
            return Err(Error::CoefficientCount {
                len: half.len(),
                bandwidth,
            });
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * bandwidth + 1];
        for (n, &c) in half.iter().enumerate() {
            let c = if n == 0 { Complex64::new(c.re, 0.0) } else { c };
            coeffs[bandwidth + n] = c;
            coeffs[bandwidth - n] = c.conj();
        }
        GradedVector::new(bandwidth, coeffs, true)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn is_real(&self) -> bool {
        self.real_flag
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coefficient û_n for a signed mode index.
    #[inline]
    pub fn coeff(&self, n: i64) -> Complex64 {
        self.coeffs[(n + self.bandwidth as i64) as usize]
    }

    #[inline]
    fn coeff_mut(&mut self, n: i64) -> &mut Complex64 {
        &mut self.coeffs[(n + self.bandwidth as i64) as usize]
    }

    /// Coefficients in storage order n = −N..N.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Iterator over (n, û_n).
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n0 = self.bandwidth as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as i64 - n0, c))
    }

    fn check_hermitian(&self) -> Result<()> {
        let amp = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        if amp == 0.0 {
            return Ok(());
        }
        for n in 0..=self.bandwidth as i64 {
            let defect = (self.coeff(-n) - self.coeff(n).conj()).norm() / amp;
            if defect > HERMITIAN_TOL {
                return Err(Error::NotHermitian { mode: n, defect });
            }
        }
        Ok(())
    }

    /// Enforces û_{−n} = conj(û_n) exactly by averaging the two halves.
    fn symmetrize(&mut self) {
        let n0 = self.bandwidth;
        self.coeffs[n0] = Complex64::new(self.coeffs[n0].re, 0.0);
        for n in 1..=n0 {
            let avg = 0.5 * (self.coeffs[n0 + n] + self.coeffs[n0 - n].conj());
            self.coeffs[n0 + n] = avg;
            self.coeffs[n0 - n] = avg.conj();
        }
    }

    /// The level-k norm ( Σ w(n)^{2k} |û_n|² )^{1/2}.
    ///
    /// This is the raw formula without a level cap; range checking against a
    /// declared maximal level lives in [`NormScale::norm`].
    pub fn norm(&self, k: usize) -> f64 {
        let mut sum = 0.0f64;
        for (n, c) in self.modes() {
            let w = weight(n);
            sum += w.powi(2 * k as i32) * c.norm_sqr();
        }
        sum.sqrt()
    }

    /// Plain level-0 inner product Σ û_n conj(v̂_n).
    pub fn inner0(&self, other: &GradedVector) -> Complex64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    /// self + a·other.
    pub fn add_scaled(&self, other: &GradedVector, a: f64) -> GradedVector {
        assert_eq!(self.bandwidth, other.bandwidth, "bandwidth mismatch");
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| x + a * y)
            .collect();
        GradedVector {
            coeffs,
            bandwidth: self.bandwidth,
            real_flag: self.real_flag && other.real_flag,
        }
    }

    /// self + a·other with a complex scalar (drops the real flag unless a is real).
    pub fn add_scaled_complex(&self, other: &GradedVector, a: Complex64) -> GradedVector {
        assert_eq!(self.bandwidth, other.bandwidth, "bandwidth mismatch");
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| x + a * y)
            .collect();
        GradedVector {
            coeffs,
            bandwidth: self.bandwidth,
            real_flag: self.real_flag && other.real_flag && a.im == 0.0,
        }
    }

    pub fn add(&self, other: &GradedVector) -> GradedVector {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &GradedVector) -> GradedVector {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, a: f64) -> GradedVector {
        GradedVector {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
            bandwidth: self.bandwidth,
            real_flag: self.real_flag,
        }
    }

    /// Spectral derivative û_n ↦ i·n·û_n. Loses exactly one level:
    /// ‖u'‖_k ≤ ‖u‖_{k+1} since |n| ≤ w(n).
    pub fn differentiate(&self) -> GradedVector {
        let n0 = self.bandwidth as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| Complex64::new(0.0, (i as i64 - n0) as f64) * c)
            .collect();
        GradedVector {
            coeffs,
            bandwidth: self.bandwidth,
            real_flag: self.real_flag,
        }
    }

    /// Rotation u(θ) ↦ u(θ + s), i.e. û_n ↦ e^{ins} û_n. Preserves every
    /// |û_n| and hence every norm of the scale.
    pub fn rotate(&self, s: f64) -> GradedVector {
        let n0 = self.bandwidth as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| Complex64::from_polar(1.0, (i as i64 - n0) as f64 * s) * c)
            .collect();
        let mut v = GradedVector {
            coeffs,
            bandwidth: self.bandwidth,
            real_flag: self.real_flag,
        };
        if v.real_flag {
            // the phases come in conjugate pairs; re-pin the symmetry exactly
            v.symmetrize();
        }
        v
    }

    /// Truncates or zero-pads to a new bandwidth.
    pub fn with_bandwidth(&self, bandwidth: usize) -> GradedVector {
        let mut out = GradedVector {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * bandwidth + 1],
            bandwidth,
            real_flag: self.real_flag,
        };
        let keep = self.bandwidth.min(bandwidth) as i64;
        for n in -keep..=keep {
            *out.coeff_mut(n) = self.coeff(n);
        }
        out
    }

    /// Samples the function on the uniform grid θ_j = 2πj/M, j = 0..M.
    ///
    /// Requires M ≥ 2N + 1 (otherwise the modes alias) and a real vector.
    pub fn synthesize(&self, grid_size: usize) -> Result<Vec<f64>> {
        if !self.real_flag {
            return Err(Error::NotReal);
        }
        let samples = self.eval_on_grid(grid_size)?;
        Ok(samples.into_iter().map(|c| c.re).collect())
    }

    /// Complex grid samples; the plumbing behind [`GradedVector::synthesize`]
    /// and the dealiased products.
    pub fn eval_on_grid(&self, grid_size: usize) -> Result<Vec<Complex64>> {
        let needed = 2 * self.bandwidth + 1;
        if grid_size < needed {
            return Err(Error::GridTooSmall {
                grid: grid_size,
                bandwidth: self.bandwidth,
                needed,
            });
        }
        let mut spectrum = vec![Complex64::new(0.0, 0.0); grid_size];
        for (n, c) in self.modes() {
            let bin = n.rem_euclid(grid_size as i64) as usize;
            spectrum[bin] += c;
        }
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(grid_size);
        ifft.process(&mut spectrum);
        Ok(spectrum)
    }

    /// Alias-free pointwise product: both factors are evaluated on a grid of
    /// at least 3N + 1 points, multiplied there, and re-analyzed, so the
    /// truncation of the true product to bandwidth N is exact. For cubic or
    /// higher nonlinearities chain this with doubled oversampling per factor.
    pub fn pointwise_product(&self, other: &GradedVector) -> Result<GradedVector> {
        if self.bandwidth != other.bandwidth {
            return Err(Error::BandwidthMismatch {
                left: self.bandwidth,
                right: other.bandwidth,
            });
        }
        let n = self.bandwidth;
        let grid = (3 * n + 1).next_power_of_two();
        let a = self.eval_on_grid(grid)?;
        let b = other.eval_on_grid(grid)?;
        let prod: Vec<Complex64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let mut out = analyze_complex(&prod, n)?;
        out.real_flag = self.real_flag && other.real_flag;
        if out.real_flag {
            out.symmetrize();
        }
        Ok(out)
    }
}

/// Recovers the coefficients of a bandwidth-limited real function from its
/// samples on the uniform grid; the inverse of [`GradedVector::synthesize`].
pub fn analyze(samples: &[f64], bandwidth: usize) -> Result<GradedVector> {
    let complex: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut v = analyze_complex(&complex, bandwidth)?;
    v.real_flag = true;
    v.symmetrize();
    Ok(v)
}

/// Analysis of complex grid data (no symmetry assumed).
pub fn analyze_complex(samples: &[Complex64], bandwidth: usize) -> Result<GradedVector> {
    let m = samples.len();
    let needed = 2 * bandwidth + 1;
    if m < needed {
        return Err(Error::GridTooSmall {
            grid: m,
            bandwidth,
            needed,
        });
    }
    let mut buf = samples.to_vec();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); needed];
    for n in -(bandwidth as i64)..=(bandwidth as i64) {
        let bin = n.rem_euclid(m as i64) as usize;
        coeffs[(n + bandwidth as i64) as usize] = buf[bin] * scale;
    }
    Ok(GradedVector {
        coeffs,
        bandwidth,
        real_flag: false,
    })
}

/// Uniform grid angles θ_j = 2πj/M.
pub fn grid_angles(grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|j| 2.0 * PI * j as f64 / grid_size as f64)
        .collect()
}

/// Seeded random real vector with |û_n| = w(n)^{−s}·U[0.5, 1] and uniform
/// phases. Identical seeds give identical vectors.
pub fn random_vector(seed: u64, bandwidth: usize, decay: f64) -> GradedVector {
    assert!(decay >= 0.0, "decay exponent must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut half = Vec::with_capacity(bandwidth + 1);
    for n in 0..=bandwidth as i64 {
        let mag = weight(n).powf(-decay) * rng.gen_range(0.5..1.0);
        let phase = if n == 0 {
            0.0
        } else {
            rng.gen_range(0.0..2.0 * PI)
        };
        half.push(Complex64::from_polar(mag, phase));
    }
    GradedVector::from_half_spectrum(bandwidth, &half).expect("construction is well-formed")
}

/// The norm family ‖·‖_0, …, ‖·‖_K with its level bookkeeping.
///
/// The weight w(n) = 1 + |n| is ≥ 1 and strictly increasing in |n|, so all
/// inclusions of a finer level into a coarser one have operator norm exactly
/// 1 and the norms are monotone in the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormScale {
    max_level: usize,
}

impl NormScale {
    pub fn new(max_level: usize) -> Self {
        NormScale { max_level }
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn check_level(&self, k: usize) -> Result<()> {
        if k > self.max_level {
            Err(Error::LevelOutOfRange {
                level: k,
                max_level: self.max_level,
            })
        } else {
            Ok(())
        }
    }

    /// Level-checked norm.
    pub fn norm(&self, u: &GradedVector, k: usize) -> Result<f64> {
        self.check_level(k)?;
        Ok(u.norm(k))
    }

    /// True iff ‖u‖_l ≤ ‖u‖_k for all l ≤ k ≤ max_level, up to a 1e−12
    /// relative slack for rounding of near-equal sums.
    pub fn is_norm_monotone(&self, u: &GradedVector) -> bool {
        let norms: Vec<f64> = (0..=self.max_level).map(|k| u.norm(k)).collect();
        norms
            .windows(2)
            .all(|w| w[0] <= w[1] * (1.0 + 1e-12) + f64::MIN_POSITIVE)
    }
}

/// Outcome of the coefficient-decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayEstimate {
    /// The upper half of the spectrum is numerically zero; at finite
    /// bandwidth this is the proxy for membership in every level.
    Infinite,
    /// Fitted decay exponent s from |û_n| ≈ w(n)^{−s} on the top half of the
    /// spectrum.
    Finite(f64),
}

impl DecayEstimate {
    pub fn at_least(&self, s: f64) -> bool {
        match self {
            DecayEstimate::Infinite => true,
            DecayEstimate::Finite(v) => *v >= s,
        }
    }

    /// The exponent as a float, with [`DecayEstimate::Infinite`] mapped to ∞.
    pub fn value(&self) -> f64 {
        match self {
            DecayEstimate::Infinite => f64::INFINITY,
            DecayEstimate::Finite(v) => *v,
        }
    }
}

/// Least-squares fit of log|û_n| against log w(n) over the top half of the
/// spectrum (|n| ≥ ⌈N/2⌉); low modes carry no asymptotic information. Fails
/// as degenerate when fewer than 4 modes in that window are usable.
pub fn fit_decay_exponent(u: &GradedVector) -> Result<DecayEstimate> {
    let n = u.bandwidth();
    let amp = u.coeffs().iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if amp == 0.0 {
        return Ok(DecayEstimate::Infinite);
    }
    let lo = n.div_ceil(2).max(1) as i64;
    let floor = amp * 1e-13;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window_total = 0usize;
    for (m, c) in u.modes() {
        if m.unsigned_abs() as i64 >= lo && m != 0 {
            window_total += 1;
            if c.norm() > floor {
                xs.push(weight(m).ln());
                ys.push(c.norm().ln());
            }
        }
    }
    if xs.is_empty() && window_total > 0 {
        // a nonzero vector whose top half is numerically zero
        return Ok(DecayEstimate::Infinite);
    }
    if xs.len() < 4 {
        return Err(Error::DegenerateFit {
            points: xs.len(),
            needed: 4,
        });
    }
    let (slope, _intercept, _r2) = linear_fit(&xs, &ys);
    Ok(DecayEstimate::Finite(-slope))
}

/// Ordinary least squares y = a·x + b; returns (a, b, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

// JSON shape: {"bandwidth": N, "real_flag": b, "coeffs": [[re, im], ...]}
// with coeffs ordered n = −N..N; serde_json prints f64 with shortest
// round-trip precision, so the round trip is exact.
impl Serialize for GradedVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("GradedVector", 3)?;
        st.serialize_field("bandwidth", &self.bandwidth)?;
        st.serialize_field("real_flag", &self.real_flag)?;
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        st.serialize_field("coeffs", &pairs)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for GradedVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = GradedVector;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a graded vector object")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<GradedVector, A::Error> {
                let mut bandwidth: Option<usize> = None;
                let mut real_flag: Option<bool> = None;
                let mut pairs: Option<Vec<[f64; 2]>> = None;
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "bandwidth" => bandwidth = Some(map.next_value()?),
                        "real_flag" => real_flag = Some(map.next_value()?),
                        "coeffs" => pairs = Some(map.next_value()?),
                        other => {
                            return Err(de::Error::unknown_field(
                                other,
                                &["bandwidth", "real_flag", "coeffs"],
                            ))
                        }
                    }
                }
                let bandwidth = bandwidth.ok_or_else(|| de::Error::missing_field("bandwidth"))?;
                let real_flag = real_flag.ok_or_else(|| de::Error::missing_field("real_flag"))?;
                let pairs = pairs.ok_or_else(|| de::Error::missing_field("coeffs"))?;
                let coeffs: Vec<Complex64> = pairs
                    .into_iter()
                    .map(|[re, im]| Complex64::new(re, im))
                    .collect();
                GradedVector::new(bandwidth, coeffs, real_flag).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_struct("GradedVector", &["bandwidth", "real_flag", "coeffs"], V)
    }
}
