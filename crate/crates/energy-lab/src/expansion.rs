//! Closed-form moment-expansion predictors of the squared energy distance in
//! the perturbative regime, and the gradient cosine-similarity analysis.
//!
//! All predictors return the two displayed expansion terms only: a `1/lambda`
//! mean term and a `1/lambda^3` covariance/skew term. The remainder is
//! bounded but not computable, so it is never estimated; callers budget for
//! it in their tolerances.
//!
//! Three routes to the same quantity are kept deliberately distinct:
//!
//! * [`spherical_expansion`] uses the exact surface-volume ratio
//!   `Vol(S^{d-1}) / c_d` and an arbitrary radial profile,
//! * [`asymptotic_expansion`] substitutes the large-d Gamma-ratio
//!   `sqrt(d / 2 pi)`,
//! * [`gaussian_expansion`] hard-codes the Gaussian radial profile on top of
//!   the asymptotic coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::MomentFunctionals;
use crate::numerics::{check_symmetric, surface_volume_ratio, SphereDim};

/// The two radial integrals that carry all profile dependence of the
/// expansion: `i0 = int_0^inf h(r) dr` and `i2 = int_0^inf h(r) r^2 dr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HProfile {
    i0: f64,
    i2: f64,
}

impl HProfile {
    pub fn new(i0: f64, i2: f64) -> Result<Self> {
        if !(i0 > 0.0 && i2 > 0.0) {
            return Err(Error::InvalidParameter {
                detail: format!("h-profile integrals must be positive, got ({i0}, {i2})"),
            });
        }
        Ok(Self { i0, i2 })
    }

    /// Gaussian profile `h(r) = exp(-r^2)`: `(sqrt(pi)/2, sqrt(pi)/4)`.
    pub fn gaussian() -> Self {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Self {
            i0: 0.5 * sqrt_pi,
            i2: 0.25 * sqrt_pi,
        }
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn i2(&self) -> f64 {
        self.i2
    }
}

/// Predicted squared energy distance split into its two expansion orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionResult {
    /// The `1/lambda` mean term; nonnegative.
    pub first_order: f64,
    /// The `1/lambda^3` covariance/skew term.
    pub third_order: f64,
    /// `first_order + third_order`.
    pub total: f64,
}

impl ExpansionResult {
    fn new(first_order: f64, third_order: f64) -> Self {
        Self {
            first_order,
            third_order,
            total: first_order + third_order,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(())
}

/// Spherically symmetric expansion with exact surface-volume ratios:
///
/// `first = (1/lambda) (Vol(S^{d-1}) / (c_d d)) ||mu||^2 i0`
/// `third = (1/lambda^3) (Vol(S^{d-1}) / (4 c_d d (d+2))) B i2`
///
/// where `B = 2||Delta||_F^2 + Tr(Delta)^2 - ||mu||^4 - 4 beta.mu` and
/// `c_d = Vol(S^d)`.
pub fn spherical_expansion(
    f: &MomentFunctionals,
    lambda: f64,
    sphere: SphereDim,
    h: &HProfile,
) -> Result<ExpansionResult> {
    check_lambda(lambda)?;
    let d = sphere.get();
    // Log-space ratio; the raw volumes underflow past d ~ 500.
    let vol_over_cd = surface_volume_ratio(d, d + 1)?;
    let d_f = d as f64;

    let first = vol_over_cd / d_f * f.mu_norm_sq * h.i0 / lambda;
    let third = vol_over_cd / (4.0 * d_f * (d_f + 2.0)) * f.covariance_feature() * h.i2
        / lambda.powi(3);
    Ok(ExpansionResult::new(first, third))
}

/// Large-d form with the Gamma-ratio replaced by its asymptote:
///
/// `first = (1/lambda) ||mu||^2 i0 / sqrt(2 pi d)`
/// `third = (1/lambda^3) B i2 / (4 d sqrt(2 pi d))`
pub fn asymptotic_expansion(
    f: &MomentFunctionals,
    lambda: f64,
    sphere: SphereDim,
    h: &HProfile,
) -> Result<ExpansionResult> {
    check_lambda(lambda)?;
    let d = sphere.get() as f64;
    let root = (2.0 * std::f64::consts::PI * d).sqrt();
    let first = f.mu_norm_sq * h.i0 / (root * lambda);
    let third = f.covariance_feature() * h.i2 / (4.0 * d * root * lambda.powi(3));
    Ok(ExpansionResult::new(first, third))
}

/// Gaussian-pair predictor from raw functionals, with the skew term absent
/// (Gaussian symmetry):
///
/// `first = (1/lambda) (8d)^{-1/2} ||mu||^2`
/// `third = (1/lambda^3) (8d)^{-3/2} [2||Delta||_F^2 + Tr(Delta)^2 - ||mu||^4]`
pub fn gaussian_expansion_from_functionals(
    f: &MomentFunctionals,
    lambda: f64,
    d: usize,
) -> Result<ExpansionResult> {
    check_lambda(lambda)?;
    if d < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: d });
    }
    let eight_d = 8.0 * d as f64;
    let bracket = 2.0 * f.delta_frob_sq + f.trace_sq - f.mu_norm_4;
    let first = f.mu_norm_sq / (eight_d.sqrt() * lambda);
    let third = bracket / (eight_d * eight_d.sqrt() * lambda.powi(3));
    Ok(ExpansionResult::new(first, third))
}

/// Gaussian-pair predictor from the moment matrices themselves.
///
/// Warns (without failing) when `lambda^2 I +/- Delta/2` is not positive
/// definite, since the formula still evaluates outside the paper-form regime.
pub fn gaussian_expansion(
    mu: &DVector<f64>,
    delta: &DMatrix<f64>,
    lambda: f64,
) -> Result<ExpansionResult> {
    check_lambda(lambda)?;
    let d = mu.len();
    if delta.nrows() != d {
        return Err(Error::DimensionMismatch {
            left: delta.nrows(),
            right: d,
        });
    }
    check_symmetric(delta)?;

    let lambda_sq = lambda * lambda;
    let extreme = delta
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &e| m.max(e.abs()));
    if lambda_sq - 0.5 * extreme <= 0.0 {
        log::warn!(
            "gaussian expansion outside the paper-form regime: \
             lambda^2 = {lambda_sq:.3e} but |eig(Delta)|/2 reaches {:.3e}",
            0.5 * extreme
        );
    }

    let mu_norm_sq: f64 = mu.iter().map(|v| v * v).sum();
    let delta_frob_sq: f64 = delta.iter().map(|v| v * v).sum();
    let trace: f64 = delta.diagonal().iter().sum();
    let f = MomentFunctionals {
        mu_norm_sq,
        mu_norm_4: mu_norm_sq * mu_norm_sq,
        delta_frob_sq,
        trace_sq: trace * trace,
        beta_dot_mu: 0.0,
    };
    gaussian_expansion_from_functionals(&f, lambda, d)
}

/// The banded (M-dependent) Gaussian closed form, split into orders:
///
/// `sqrt(d/8) [ mu1^2/lambda
///            + (delta^4/8 - mu1^4/8 + delta^4/(4d) + M rho^4/(2d)) / lambda^3 ]`
///
/// with `delta^4 = delta_sq^2` and `rho^4 = rho_sq^2`.
pub fn mdependent_expansion_parts(
    mu1: f64,
    delta_sq: f64,
    lambda: f64,
    d: usize,
    m: usize,
    rho_sq: f64,
) -> Result<ExpansionResult> {
    check_lambda(lambda)?;
    if d < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: d });
    }
    let d_f = d as f64;
    let scale = (d_f / 8.0).sqrt();
    let delta4 = delta_sq * delta_sq;
    let rho4 = rho_sq * rho_sq;
    let mu1_sq = mu1 * mu1;
    let first = scale * mu1_sq / lambda;
    let third = scale
        * (delta4 / 8.0 - mu1_sq * mu1_sq / 8.0
            + delta4 / (4.0 * d_f)
            + m as f64 * rho4 / (2.0 * d_f))
        / lambda.powi(3);
    Ok(ExpansionResult::new(first, third))
}

/// Total of [`mdependent_expansion_parts`].
pub fn mdependent_expansion(
    mu1: f64,
    delta_sq: f64,
    lambda: f64,
    d: usize,
    m: usize,
    rho_sq: f64,
) -> Result<f64> {
    Ok(mdependent_expansion_parts(mu1, delta_sq, lambda, d, m, rho_sq)?.total)
}

/// Per-marginal (per-sqrt(d)) expanded form of the 1-d M-dependent limit:
/// `2^{-3/2} [ mu1^2/lambda - mu1^4/(8 lambda^3) + delta^4/(8 lambda^3) ]`.
pub fn mdependent_marginal_form(mu1: f64, delta_sq: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mu1_sq = mu1 * mu1;
    let delta4 = delta_sq * delta_sq;
    let lam3 = lambda.powi(3);
    Ok((mu1_sq / lambda - mu1_sq * mu1_sq / (8.0 * lam3) + delta4 / (8.0 * lam3))
        / (2.0f64).powf(1.5))
}

/// Pre-expansion exact form the marginal approximation is derived from:
/// `sqrt(mu1^2 + 2 lambda^2) - (1/sqrt(2)) [sqrt(lambda^2 + delta^2/2)
///  + sqrt(lambda^2 - delta^2/2)]`.
pub fn mdependent_marginal_exact(mu1: f64, delta_sq: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let lambda_sq = lambda * lambda;
    if lambda_sq < 0.5 * delta_sq {
        return Err(Error::InvalidParameter {
            detail: format!(
                "negative radicand: lambda^2 = {lambda_sq} < delta^2/2 = {}",
                0.5 * delta_sq
            ),
        });
    }
    let mean_term = (mu1 * mu1 + 2.0 * lambda_sq).sqrt();
    let spread = ((lambda_sq + 0.5 * delta_sq).sqrt() + (lambda_sq - 0.5 * delta_sq).sqrt())
        / std::f64::consts::SQRT_2;
    Ok(mean_term - spread)
}

/// Cosine similarity between the gradient of the expansion's covariance term
/// `2||Delta||_F^2 + Tr(Delta)^2` and the gradient of the ideal Frobenius
/// loss `||Delta||_F^2`, as a function of the diagonal-importance ratio
/// `gamma^2 = Tr(Delta)^2 / ||Delta||_F^2 in [0, d]`:
///
/// `S = (2 + gamma^2) / sqrt(4 + gamma^2 (4 + d))`
pub fn cosine_similarity_gamma(gamma_sq: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: d });
    }
    if !(0.0..=d as f64).contains(&gamma_sq) {
        return Err(Error::InvalidParameter {
            detail: format!("gamma^2 must lie in [0, d] = [0, {d}], got {gamma_sq}"),
        });
    }
    Ok((2.0 + gamma_sq) / (4.0 + gamma_sq * (4.0 + d as f64)).sqrt())
}

/// Matrix form of [`cosine_similarity_gamma`] with `gamma^2` computed from
/// the trace and Frobenius norm (no eigendecomposition needed).
pub fn cosine_similarity(delta: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(delta)?;
    let frob_sq: f64 = delta.iter().map(|v| v * v).sum();
    if frob_sq == 0.0 {
        return Err(Error::InvalidParameter {
            detail: "cosine similarity is undefined for Delta = 0".to_string(),
        });
    }
    let trace: f64 = delta.diagonal().iter().sum();
    let gamma_sq = trace * trace / frob_sq;
    // Guard the Cauchy-Schwarz bound against rounding before validating.
    cosine_similarity_gamma(gamma_sq.min(delta.nrows() as f64), delta.nrows())
}

/// The four asymptotic regimes of the similarity table: local/global
/// correlation structure crossed with biased/unbiased marginal scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationRegime {
    /// `||Delta||_F^2 ~ M d`, `Tr(Delta)^2 ~ d^2`.
    LocalBiased { m: usize },
    /// `||Delta||_F^2 ~ M d`, `Tr(Delta)^2 ~ d`.
    LocalUnbiased { m: usize },
    /// `||Delta||_F^2 ~ rho d^2`, `Tr(Delta)^2 ~ d^2`.
    GlobalBiased { rho: f64 },
    /// `||Delta||_F^2 ~ rho d^2`, `Tr(Delta)^2 ~ d`.
    GlobalUnbiased { rho: f64 },
}

/// Asymptotic similarity for each regime: `sqrt(1/M)`, `sqrt(M/d)`,
/// `sqrt(1/d)`, and `1` respectively.
pub fn similarity_regime(regime: CorrelationRegime, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: d });
    }
    let check_m = |m: usize| -> Result<f64> {
        if m < 1 || m > d {
            return Err(Error::InvalidParameter {
                detail: format!("local correlation length m = {m} must satisfy 1 <= m <= d = {d}"),
            });
        }
        Ok(m as f64)
    };
    let check_rho = |rho: f64| -> Result<()> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter {
                detail: format!("global correlation fraction rho = {rho} must lie in (0, 1)"),
            });
        }
        Ok(())
    };
    match regime {
        CorrelationRegime::LocalBiased { m } => Ok((1.0 / check_m(m)?).sqrt()),
        CorrelationRegime::LocalUnbiased { m } => Ok((check_m(m)? / d as f64).sqrt()),
        CorrelationRegime::GlobalBiased { rho } => {
            check_rho(rho)?;
            Ok((1.0 / d as f64).sqrt())
        }
        CorrelationRegime::GlobalUnbiased { rho } => {
            check_rho(rho)?;
            Ok(1.0)
        }
    }
}

/// Scale convention for a general covariance pair:
/// `lambda^2 = Tr(C_X + C_Y) / (2d)`, which reduces to the paper's `lambda`
/// for the `lambda^2 I +/- Delta/2` form.
pub fn isotropic_midpoint_lambda(cov_x: &DMatrix<f64>, cov_y: &DMatrix<f64>) -> Result<f64> {
    if cov_x.nrows() != cov_y.nrows() {
        return Err(Error::DimensionMismatch {
            left: cov_x.nrows(),
            right: cov_y.nrows(),
        });
    }
    let d = cov_x.nrows();
    if d == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    let trace: f64 = cov_x
        .diagonal()
        .iter()
        .chain(cov_y.diagonal().iter())
        .sum();
    if !(trace > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("covariance traces must be positive, got {trace}"),
        });
    }
    Ok((trace / (2.0 * d as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{banded_gaussian_pair, sample, BandedDelta, DistributionSpec};
    use crate::estimators::{energy_distance_sq, EstimatorMode};
    use crate::numerics::surface_volume;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn zero_functionals() -> MomentFunctionals {
        MomentFunctionals {
            mu_norm_sq: 0.0,
            mu_norm_4: 0.0,
            delta_frob_sq: 0.0,
            trace_sq: 0.0,
            beta_dot_mu: 0.0,
        }
    }

    fn test_functionals() -> MomentFunctionals {
        MomentFunctionals {
            mu_norm_sq: 0.4,
            mu_norm_4: 0.16,
            delta_frob_sq: 1.3,
            trace_sq: 2.1,
            beta_dot_mu: 0.05,
        }
    }

    #[test]
    fn zero_moments_predict_zero() {
        let f = zero_functionals();
        let sphere = SphereDim::new(16).unwrap();
        let h = HProfile::gaussian();
        for res in [
            spherical_expansion(&f, 2.0, sphere, &h).unwrap(),
            asymptotic_expansion(&f, 2.0, sphere, &h).unwrap(),
            gaussian_expansion_from_functionals(&f, 2.0, 16).unwrap(),
        ] {
            assert_eq!(res.first_order, 0.0);
            assert_eq!(res.third_order, 0.0);
            assert_eq!(res.total, 0.0);
        }
    }

    #[test]
    fn lambda_homogeneity_of_orders() {
        let f = test_functionals();
        let sphere = SphereDim::new(32).unwrap();
        let h = HProfile::gaussian();
        for lambda in [0.5, 1.0, 3.0] {
            let base = spherical_expansion(&f, lambda, sphere, &h).unwrap();
            let doubled = spherical_expansion(&f, 2.0 * lambda, sphere, &h).unwrap();
            assert_relative_eq!(doubled.first_order, base.first_order / 2.0, max_relative = 1e-14);
            assert_relative_eq!(doubled.third_order, base.third_order / 8.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn nonpositive_lambda_is_rejected_everywhere() {
        let f = test_functionals();
        let sphere = SphereDim::new(8).unwrap();
        let h = HProfile::gaussian();
        assert!(spherical_expansion(&f, 0.0, sphere, &h).is_err());
        assert!(asymptotic_expansion(&f, -1.0, sphere, &h).is_err());
        assert!(gaussian_expansion_from_functionals(&f, 0.0, 8).is_err());
        assert!(mdependent_expansion(0.1, 0.1, 0.0, 8, 1, 0.0).is_err());
        assert!(mdependent_marginal_form(0.1, 0.1, -2.0).is_err());
    }

    #[test]
    fn gaussian_profile_makes_asymptotic_equal_gaussian_route() {
        let f = test_functionals();
        // The Gaussian route drops beta; align the inputs.
        let f_sym = MomentFunctionals {
            beta_dot_mu: 0.0,
            ..f
        };
        let sphere = SphereDim::new(24).unwrap();
        let asym = asymptotic_expansion(&f_sym, 1.7, sphere, &HProfile::gaussian()).unwrap();
        let gauss = gaussian_expansion_from_functionals(&f_sym, 1.7, 24).unwrap();
        assert_relative_eq!(asym.first_order, gauss.first_order, max_relative = 1e-13);
        assert_relative_eq!(asym.third_order, gauss.third_order, max_relative = 1e-13);
    }

    #[test]
    fn exact_ratio_route_approaches_asymptotic_route() {
        let f = test_functionals();
        let h = HProfile::gaussian();

        // d = 64: first order within 2%.
        let sphere64 = SphereDim::new(64).unwrap();
        let sph = spherical_expansion(&f, 1.0, sphere64, &h).unwrap();
        let asym = asymptotic_expansion(&f, 1.0, sphere64, &h).unwrap();
        assert!(
            (asym.first_order / sph.first_order - 1.0).abs() < 0.02,
            "first-order ratio {}",
            asym.first_order / sph.first_order
        );
        // Third order also carries the (d+2) vs d gap.
        assert!((asym.third_order / sph.third_order - 1.0).abs() < 0.05);

        // d = 256: both orders within 1%.
        let sphere256 = SphereDim::new(256).unwrap();
        let sph = spherical_expansion(&f, 1.0, sphere256, &h).unwrap();
        let asym = asymptotic_expansion(&f, 1.0, sphere256, &h).unwrap();
        assert!((asym.first_order / sph.first_order - 1.0).abs() < 0.01);
        assert!((asym.third_order / sph.third_order - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_ratio_route_survives_high_dimension() {
        // Raw sphere volumes underflow long before d = 1024; the exact-ratio
        // predictor must not.
        let f = test_functionals();
        let res =
            spherical_expansion(&f, 1.0, SphereDim::new(1024).unwrap(), &HProfile::gaussian())
                .unwrap();
        assert!(res.first_order.is_finite() && res.first_order > 0.0);
        assert!(res.third_order.is_finite());
    }

    #[test]
    fn first_order_scaling_in_dimension_tracks_volume_ratios() {
        let f = test_functionals();
        let h = HProfile::gaussian();
        let lambda = 1.0;
        let at = |d: usize| {
            spherical_expansion(&f, lambda, SphereDim::new(d).unwrap(), &h)
                .unwrap()
                .first_order
        };
        // first_order(d) is proportional to Vol(S^{d-1}) / (Vol(S^d) d).
        let predicted_ratio = |d1: usize, d2: usize| {
            let coeff = |d: usize| {
                surface_volume(d).unwrap() / (surface_volume(d + 1).unwrap() * d as f64)
            };
            coeff(d1) / coeff(d2)
        };
        assert_relative_eq!(
            at(16) / at(64),
            predicted_ratio(16, 64),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gaussian_expansion_frozen_plug_in_value() {
        // d = 16, lambda = 1, mu1 = 0.06 per coordinate, Delta = 0:
        // first order = 16 * 0.0036 / sqrt(128).
        let d = 16;
        let mu = DVector::from_element(d, 0.06);
        let delta = DMatrix::zeros(d, d);
        let res = gaussian_expansion(&mu, &delta, 1.0).unwrap();
        assert_relative_eq!(res.first_order, 5.091168824543141e-3, max_relative = 1e-12);
        // With Delta = 0 the third order is the pure -||mu||^4 correction.
        assert!(res.third_order < 0.0 && res.third_order.abs() < 1e-5);
    }

    #[test]
    fn gaussian_expansion_prediction_matches_monte_carlo() {
        // Same setting as the frozen value, cross-checked by simulation.
        let d = 16;
        let n = 1 << 13;
        let mu = DVector::from_element(d, 0.06);
        let delta = DMatrix::zeros(d, d);
        let predicted = gaussian_expansion(&mu, &delta, 1.0).unwrap().total;

        let spec_x = DistributionSpec::gaussian(mu, DMatrix::identity(d, d)).unwrap();
        let spec_y = DistributionSpec::gaussian(DVector::zeros(d), DMatrix::identity(d, d)).unwrap();
        let x = sample(&spec_x, n, 515).unwrap();
        let y = sample(&spec_y, n, 516).unwrap();
        let est = energy_distance_sq(&x, &y, EstimatorMode::UStat).unwrap();
        assert!(
            (est.value - predicted).abs() <= 4.0 * est.std_error,
            "estimate {} predicted {predicted} se {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn gaussian_expansion_is_orthogonally_invariant() {
        let d = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut delta = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = StandardNormal.sample(&mut rng);
                delta[(i, j)] = 0.05 * v;
                delta[(j, i)] = 0.05 * v;
            }
        }
        let mu = DVector::from_fn(d, |i, _| 0.02 * (i as f64 + 1.0));
        let raw = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = raw.qr().q();

        let base = gaussian_expansion(&mu, &delta, 2.0).unwrap();
        let rotated = gaussian_expansion(&(&q * &mu), &(&q * &delta * q.transpose()), 2.0).unwrap();
        assert_relative_eq!(base.first_order, rotated.first_order, max_relative = 1e-10);
        assert_relative_eq!(base.third_order, rotated.third_order, max_relative = 1e-9);
    }

    #[test]
    fn mdependent_zero_inputs_and_bandless_independence() {
        assert_eq!(mdependent_expansion(0.0, 0.0, 2.0, 32, 3, 0.0).unwrap(), 0.0);
        let with_rho = mdependent_expansion(0.1, 0.2, 2.0, 32, 0, 0.9).unwrap();
        let without = mdependent_expansion(0.1, 0.2, 2.0, 32, 0, 0.0).unwrap();
        assert_eq!(with_rho, without);
    }

    #[test]
    fn mdependent_matches_gaussian_route_on_exact_banded_delta() {
        let d = 64;
        let m = 2;
        let (mu1, delta_sq, rho_sq, lambda) = (0.1, 0.2, 0.15, 4.0);
        let banded = BandedDelta::new(d, delta_sq, rho_sq, m).unwrap();
        let mu = DVector::from_element(d, mu1);
        let exact_route = gaussian_expansion(&mu, &banded.matrix(), lambda).unwrap();
        let closed = mdependent_expansion_parts(mu1, delta_sq, lambda, d, m, rho_sq).unwrap();
        assert_relative_eq!(closed.first_order, exact_route.first_order, max_relative = 1e-12);
        let rel = (closed.third_order - exact_route.third_order).abs()
            / exact_route.third_order.abs();
        assert!(rel < 0.07, "third-order corner gap {rel}");
    }

    #[test]
    fn mdependent_agrees_with_banded_pair_scale_convention() {
        // The banded pair has Tr(C_X + C_Y) = 2 d lambda^2 by construction.
        let banded = BandedDelta::new(16, 0.3, 0.1, 2).unwrap();
        let (x, y) = banded_gaussian_pair(&banded, 0.2, 1.7).unwrap();
        let lambda = isotropic_midpoint_lambda(&x.base_cov, &y.base_cov).unwrap();
        assert_relative_eq!(lambda, 1.7, max_relative = 1e-12);
    }

    #[test]
    fn marginal_form_zero_case_and_frozen_value() {
        assert_eq!(mdependent_marginal_form(0.0, 0.0, 1.0).unwrap(), 0.0);
        // 2^{-3/2} (0.09 - 0.0081/8)
        let v = mdependent_marginal_form(0.3, 0.0, 1.0).unwrap();
        assert_relative_eq!(v, 3.14618323454189455e-2, max_relative = 1e-12);
        assert_relative_eq!(
            v,
            (0.09 - 0.0081 / 8.0) / (2.0f64).powf(1.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn marginal_exact_and_expanded_forms_agree_in_the_perturbative_regime() {
        let (mu1, delta_sq, lambda) = (0.5, 0.25, 10.0);
        // delta = 0.5 means delta^2 = 0.25.
        let exact = mdependent_marginal_exact(mu1, delta_sq, lambda).unwrap();
        let expanded = mdependent_marginal_form(mu1, delta_sq, lambda).unwrap();
        let leading = (2.0f64).powf(-1.5) * mu1 * mu1 / lambda;
        assert!(
            (exact - expanded).abs() < 1e-5 * leading,
            "exact {exact} expanded {expanded}"
        );
    }

    #[test]
    fn marginal_exact_rejects_negative_radicand() {
        assert!(mdependent_marginal_exact(0.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn cosine_similarity_endpoints_are_one() {
        for d in [2usize, 4, 16, 64] {
            assert_relative_eq!(cosine_similarity_gamma(0.0, d).unwrap(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(
                cosine_similarity_gamma(d as f64, d).unwrap(),
                1.0,
                epsilon = 1e-12
            );
        }
        // Traceless and proportional-to-identity matrices hit the endpoints.
        let traceless = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.5, -0.5]));
        assert_relative_eq!(cosine_similarity(&traceless).unwrap(), 1.0, epsilon = 1e-12);
        let eye = DMatrix::<f64>::identity(5, 5) * 0.3;
        assert_relative_eq!(cosine_similarity(&eye).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_similarity_matches_eigen_gradient_oracle() {
        // Delta = diag(2, 1, 0, 0): gradients from the eigenvalues directly.
        let delta = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.0, 0.0]));
        let s = cosine_similarity(&delta).unwrap();

        let eigs = [2.0, 1.0, 0.0, 0.0];
        let trace: f64 = eigs.iter().sum();
        let grad_l: Vec<f64> = eigs.iter().map(|e| 4.0 * e + 2.0 * trace).collect();
        let grad_i: Vec<f64> = eigs.iter().map(|e| 2.0 * e).collect();
        let dot: f64 = grad_l.iter().zip(&grad_i).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let oracle = dot / (norm(&grad_l) * norm(&grad_i));
        assert_relative_eq!(s, oracle, epsilon = 1e-12);
    }

    #[test]
    fn cosine_similarity_interior_values_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4444);
        for _ in 0..50 {
            let d = 5;
            let mut delta = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    delta[(i, j)] = v;
                    delta[(j, i)] = v;
                }
            }
            let s = cosine_similarity(&delta).unwrap();
            assert!(s > 0.0 && s <= 1.0 + 1e-12, "similarity {s}");
        }
    }

    #[test]
    fn cosine_similarity_rejects_zero_matrix_and_bad_gamma() {
        assert!(cosine_similarity(&DMatrix::<f64>::zeros(3, 3)).is_err());
        assert!(cosine_similarity_gamma(-0.1, 4).is_err());
        assert!(cosine_similarity_gamma(4.1, 4).is_err());
    }

    #[test]
    fn similarity_regime_table_values() {
        assert_relative_eq!(
            similarity_regime(CorrelationRegime::LocalBiased { m: 16 }, 256).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            similarity_regime(CorrelationRegime::GlobalUnbiased { rho: 0.5 }, 256).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            similarity_regime(CorrelationRegime::LocalUnbiased { m: 4 }, 256).unwrap(),
            0.125,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            similarity_regime(CorrelationRegime::GlobalBiased { rho: 0.5 }, 256).unwrap(),
            0.0625,
            epsilon = 1e-15
        );
        assert!(similarity_regime(CorrelationRegime::LocalBiased { m: 0 }, 256).is_err());
        assert!(similarity_regime(CorrelationRegime::GlobalBiased { rho: 1.5 }, 256).is_err());
    }

    #[test]
    fn synthetic_local_unbiased_delta_lands_near_regime_value() {
        // d = 256, M = 4. Deterministic banded matrix: alternating-sign
        // diagonal adjusted so Tr(Delta)^2 = d, band entries of squared
        // magnitude 1/8 so ||Delta||_F^2 ~ 2d (local-unbiased scaling).
        let d = 256usize;
        let m = 4usize;
        let root_d = (d as f64).sqrt() as usize;
        let band = (0.125f64).sqrt();
        let mut delta = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            delta[(i, i)] = if i < d - root_d {
                if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                1.0
            };
            for j in (i + 1)..((i + m + 1).min(d)) {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                delta[(i, j)] = sign * band;
                delta[(j, i)] = sign * band;
            }
        }
        let trace: f64 = delta.diagonal().iter().sum();
        assert_eq!(trace as i64, root_d as i64);

        let s = cosine_similarity(&delta).unwrap();
        let regime = similarity_regime(CorrelationRegime::LocalUnbiased { m }, d).unwrap();
        assert!(
            s / regime < 2.0 && s / regime > 0.5,
            "similarity {s} vs regime value {regime}"
        );
    }

    #[test]
    fn midpoint_lambda_reduces_to_paper_form() {
        let d = 8;
        let eye = DMatrix::<f64>::identity(d, d);
        let lambda = isotropic_midpoint_lambda(&(&eye * 4.0), &(&eye * 4.0)).unwrap();
        assert_relative_eq!(lambda, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn h_profile_validates_positivity() {
        assert!(HProfile::new(0.0, 1.0).is_err());
        assert!(HProfile::new(1.0, -1.0).is_err());
        let h = HProfile::gaussian();
        assert_relative_eq!(h.i0(), 2.0 * h.i2(), max_relative = 1e-15);
    }
}
