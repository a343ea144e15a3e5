//! Sphere geometry, closed-form spherical polynomial integrals, a two-term
//! least-squares fitter, and 1-d quadrature.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! many threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::seeding::mix_seed;

/// Ambient dimension of a sphere `S^{d-1}`, restricted to `d >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereDim(usize);

impl SphereDim {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall { min: 2, got: d });
        }
        Ok(SphereDim(d))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Compensated (Kahan) accumulator.
///
/// The expansion signal is a small difference of large pairwise sums, so
/// within-row and across-row accumulations both run compensated.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Sum a slice in index order with compensation.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut acc = Kahan::new();
    for &v in values {
        acc.add(v);
    }
    acc.total()
}

/// Natural log of the surface measure of `S^{d-1}`.
///
/// Volumes underflow f64 past d ~ 500, so ratio computations go through this
/// log form; see [`surface_volume_ratio`].
pub fn ln_surface_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    let d = d as f64;
    Ok(std::f64::consts::LN_2 + 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d))
}

/// Surface measure of the unit sphere `S^{d-1}`: `2 pi^{d/2} / Gamma(d/2)`.
pub fn surface_volume(d: usize) -> Result<f64> {
    Ok(ln_surface_volume(d)?.exp())
}

/// `Vol(S^{d1-1}) / Vol(S^{d2-1})`, stable up to d ~ 1024 where the raw
/// volumes have long since underflowed.
pub fn surface_volume_ratio(d1: usize, d2: usize) -> Result<f64> {
    Ok((ln_surface_volume(d1)? - ln_surface_volume(d2)?).exp())
}

/// Exact integral of the monomial `prod_i theta_i^{a_i}` over `S^{d-1}`.
///
/// Zero when any exponent is odd; otherwise
/// `2 prod Gamma((a_i+1)/2) / Gamma(sum (a_i+1)/2)`.
pub fn sphere_monomial_integral(exponents: &[u32], d: usize) -> Result<f64> {
    if exponents.len() != d {
        return Err(Error::DimensionMismatch {
            left: exponents.len(),
            right: d,
        });
    }
    if d == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    if exponents.iter().any(|&a| a % 2 == 1) {
        return Ok(0.0);
    }
    let mut log_num = 0.0;
    let mut half_sum = 0.0;
    for &a in exponents {
        let half = 0.5 * (a as f64 + 1.0);
        log_num += ln_gamma(half);
        half_sum += half;
    }
    Ok(2.0 * (log_num - ln_gamma(half_sum)).exp())
}

/// Closed form of `int_{S^{d-1}} (theta . Delta theta)^2 dOmega` for a
/// symmetric `Delta`: `[2 ||Delta||_F^2 + Tr(Delta)^2] Vol(S^{d-1}) / (d(d+2))`.
pub fn quadratic_form_sphere_integral(delta: &nalgebra::DMatrix<f64>) -> Result<f64> {
    let d = delta.nrows();
    check_symmetric(delta)?;
    let mut frob_sq = 0.0;
    let mut trace = 0.0;
    for j in 0..d {
        for i in 0..d {
            frob_sq += delta[(i, j)] * delta[(i, j)];
        }
        trace += delta[(j, j)];
    }
    let vol = surface_volume(d)?;
    Ok((2.0 * frob_sq + trace * trace) * vol / ((d * (d + 2)) as f64))
}

/// Validate that a square matrix is symmetric to relative tolerance 1e-9.
pub(crate) fn check_symmetric(a: &nalgebra::DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: a.ncols(),
        });
    }
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    let mut worst = (0usize, 0usize, 0.0f64);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let asym = (a[(i, j)] - a[(j, i)]).abs();
            if asym > worst.2 {
                worst = (i, j, asym);
            }
        }
    }
    if worst.2 > 1e-9 * scale {
        return Err(Error::NotSymmetric {
            row: worst.0,
            col: worst.1,
            max_asym: worst.2,
        });
    }
    Ok(())
}

/// Two-term no-intercept least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r_squared: f64,
}

/// Fit `target ~ alpha1 * f1 + alpha2 * f2` (no intercept) by normal
/// equations. `r_squared` is `1 - SS_res / SS_tot` with `SS_tot` taken about
/// the target mean, so it can be negative for a poor no-intercept model.
pub fn fit_two_term(features: &[[f64; 2]], targets: &[f64]) -> Result<RegressionFit> {
    let n = features.len();
    if n != targets.len() {
        return Err(Error::DimensionMismatch {
            left: n,
            right: targets.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n });
    }

    let mut g11 = 0.0;
    let mut g12 = 0.0;
    let mut g22 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for (row, &y) in features.iter().zip(targets) {
        let [f1, f2] = *row;
        g11 += f1 * f1;
        g12 += f1 * f2;
        g22 += f2 * f2;
        b1 += f1 * y;
        b2 += f2 * y;
    }

    // Condition number of the 2x2 Gram matrix from its closed-form eigenvalues.
    let half_trace = 0.5 * (g11 + g22);
    let disc = (0.25 * (g11 - g22) * (g11 - g22) + g12 * g12).sqrt();
    let eig_max = half_trace + disc;
    let eig_min = half_trace - disc;
    if !(eig_min > 0.0) || eig_max / eig_min > 1e12 {
        let detail = if g11 == 0.0 {
            "feature column 1 is identically zero".to_string()
        } else if g22 == 0.0 {
            "feature column 2 is identically zero".to_string()
        } else {
            format!(
                "feature columns 1 and 2 are collinear (gram condition {:.3e})",
                if eig_min > 0.0 {
                    eig_max / eig_min
                } else {
                    f64::INFINITY
                }
            )
        };
        return Err(Error::DegenerateDesign { detail });
    }

    let det = g11 * g22 - g12 * g12;
    let alpha1 = (g22 * b1 - g12 * b2) / det;
    let alpha2 = (g11 * b2 - g12 * b1) / det;

    let mean_y = targets.iter().sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, &y) in features.iter().zip(targets) {
        let fitted = alpha1 * row[0] + alpha2 * row[1];
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };

    Ok(RegressionFit {
        alpha1,
        alpha2,
        r_squared,
    })
}

/// `E|Z|` for `Z ~ Normal(m, s^2)` by adaptive Simpson quadrature to absolute
/// tolerance 1e-10. Serves as an independent oracle for the 1-d estimators.
pub fn quad_abs_normal_mean(m: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("standard deviation must be positive, got {s}"),
        });
    }
    let pdf = move |z: f64| {
        let u = (z - m) / s;
        (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    };
    let integrand = move |z: f64| z.abs() * pdf(z);

    // Split at the |z| kink and the density peak; 14 sigma tails are below
    // the tolerance by many orders of magnitude.
    let lo = m - 14.0 * s;
    let hi = m + 14.0 * s;
    let mut cuts = vec![lo, m, hi];
    if lo < 0.0 && 0.0 < hi {
        cuts.push(0.0);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive_simpson(&integrand, pair[0], pair[1], 0.25e-10);
    }
    Ok(total)
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, eps, whole, fa, fb, fc, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    eps: f64,
    whole: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, c, 0.5 * eps, left, fa, fc, fd, depth - 1)
            + simpson_step(f, c, b, 0.5 * eps, right, fc, fb, fe, depth - 1)
    }
}

/// Draw a uniform point on `S^{d-1}` by normalizing a standard Gaussian vector.
pub fn sample_unit_sphere(d: usize, rng: &mut impl rand::Rng, out: &mut [f64]) {
    debug_assert_eq!(out.len(), d);
    loop {
        let mut norm_sq = 0.0;
        for slot in out.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *slot = g;
            norm_sq += g * g;
        }
        if norm_sq > 1e-290 {
            let inv = norm_sq.sqrt().recip();
            for slot in out.iter_mut() {
                *slot *= inv;
            }
            return;
        }
    }
}

const SPHERE_MC_CHUNK: usize = 1 << 14;

/// Monte-Carlo estimate of `int_{S^{d-1}} f dOmega` with `n_points` uniform
/// sphere samples. Returns `(estimate, standard_error)`, both already scaled
/// by the surface measure.
///
/// Points are generated in fixed-size chunks with per-chunk seeds, and chunk
/// results are combined in index order, so the value is identical no matter
/// how many threads run the chunks.
pub fn sphere_monte_carlo<F>(f: F, d: usize, n_points: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if d == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    if n_points < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: n_points,
        });
    }
    let vol = surface_volume(d)?;
    let n_chunks = n_points.div_ceil(SPHERE_MC_CHUNK);

    let eval_chunk = |chunk: usize| -> (f64, f64) {
        let start = chunk * SPHERE_MC_CHUNK;
        let len = SPHERE_MC_CHUNK.min(n_points - start);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, chunk as u64));
        let mut theta = vec![0.0; d];
        let mut sum = Kahan::new();
        let mut sum_sq = Kahan::new();
        for _ in 0..len {
            sample_unit_sphere(d, &mut rng, &mut theta);
            let v = f(&theta);
            sum.add(v);
            sum_sq.add(v * v);
        }
        (sum.total(), sum_sq.total())
    };

    let partials: Vec<(f64, f64)> = crate::maybe_parallel_map(0..n_chunks, eval_chunk);

    let mut sum = Kahan::new();
    let mut sum_sq = Kahan::new();
    for (s, q) in &partials {
        sum.add(*s);
        sum_sq.add(*q);
    }
    let n = n_points as f64;
    let mean = sum.total() / n;
    let var = ((sum_sq.total() / n - mean * mean) / (n - 1.0)).max(0.0);
    Ok((vol * mean, vol * var.sqrt()))
}
