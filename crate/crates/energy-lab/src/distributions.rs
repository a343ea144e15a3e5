//! Sampleable distribution families and random covariance generation.
//!
//! Every family is a transformation of a multivariate Gaussian core
//! `Z ~ N(mean, base_cov)`:
//!
//! * `Gaussian` — identity transform.
//! * `MultivariateT(dof)` — one shared `chi^2_dof` divisor per draw applied
//!   to the centered vector (the classical elliptical construction), so the
//!   location is `mean` and the covariance is `dof/(dof-2) * base_cov`.
//! * `ExpScale(sigma)` — componentwise `exp(sigma * z)`, a multivariate
//!   lognormal.
//! * `SinhArcsinhSkew(skew)` — componentwise `sinh(asinh(z) + skew)`, a
//!   skew-only tilt that is exactly the identity at `skew = 0`.
//!
//! Sampling is a pure function of `(spec, n, seed)`; there is no global RNG
//! state anywhere in this module.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::numerics::check_symmetric;
use crate::seeding::combine_seed;

/// Distribution family tag with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    MultivariateT { dof: f64 },
    ExpScale { sigma: f64 },
    SinhArcsinhSkew { skew: f64 },
}

impl Family {
    /// Family name as it appears in report files.
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "Gaussian",
            Family::MultivariateT { .. } => "MultivariateT",
            Family::ExpScale { .. } => "Exp",
            Family::SinhArcsinhSkew { .. } => "SinhArcsinh",
        }
    }

    /// Shape parameter as a string, empty for the Gaussian.
    pub fn param_string(&self) -> String {
        match self {
            Family::Gaussian => String::new(),
            Family::MultivariateT { dof } => format!("{dof}"),
            Family::ExpScale { sigma } => format!("{sigma}"),
            Family::SinhArcsinhSkew { skew } => format!("{skew}"),
        }
    }

    /// Stable label, e.g. `MultivariateT(3)`.
    pub fn label(&self) -> String {
        match self {
            Family::Gaussian => "Gaussian".to_string(),
            _ => format!("{}({})", self.name(), self.param_string()),
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Family::Gaussian => 1,
            Family::MultivariateT { .. } => 2,
            Family::ExpScale { .. } => 3,
            Family::SinhArcsinhSkew { .. } => 4,
        }
    }

    /// Stable numeric identity (family tag + parameter bits), used for
    /// order-independent per-cell seeding.
    pub fn stable_id(&self) -> u64 {
        self.tag()
            .wrapping_mul(0x0100_0000_01B3)
            .wrapping_add(self.param_bits())
    }

    fn param_bits(&self) -> u64 {
        match self {
            Family::Gaussian => 0,
            Family::MultivariateT { dof } => dof.to_bits(),
            Family::ExpScale { sigma } => sigma.to_bits(),
            Family::SinhArcsinhSkew { skew } => skew.to_bits(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Family::MultivariateT { dof } if !(*dof > 0.0) => Err(Error::InvalidParameter {
                detail: format!("degrees of freedom must be positive, got {dof}"),
            }),
            Family::ExpScale { sigma } if !(*sigma > 0.0) => Err(Error::InvalidParameter {
                detail: format!("exp scale sigma must be positive, got {sigma}"),
            }),
            Family::SinhArcsinhSkew { skew } if !skew.is_finite() => {
                Err(Error::InvalidParameter {
                    detail: "skew must be finite".to_string(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// A sampleable d-dimensional law: family + Gaussian-core parameters.
///
/// For `MultivariateT` the `base_cov` is the scale matrix of the Gaussian
/// core, not the covariance of the law itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    pub mean: DVector<f64>,
    pub base_cov: DMatrix<f64>,
}

impl DistributionSpec {
    pub fn new(family: Family, mean: DVector<f64>, base_cov: DMatrix<f64>) -> Result<Self> {
        family.validate()?;
        if mean.len() != base_cov.nrows() {
            return Err(Error::DimensionMismatch {
                left: mean.len(),
                right: base_cov.nrows(),
            });
        }
        check_symmetric(&base_cov)?;
        if Cholesky::new(base_cov.clone()).is_none() {
            let min_eig = min_symmetric_eigenvalue(&base_cov);
            return Err(Error::NotPositiveDefinite {
                eigenvalue: min_eig,
            });
        }
        Ok(Self {
            family,
            mean,
            base_cov,
        })
    }

    /// Convenience constructor for a plain Gaussian.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(Family::Gaussian, mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Stable identifier of the generating spec, folded from every parameter.
    pub fn digest(&self) -> u64 {
        let mut parts: Vec<u64> = vec![
            self.family.tag(),
            self.family.param_bits(),
            self.dim() as u64,
        ];
        parts.extend(self.mean.iter().map(|v| v.to_bits()));
        parts.extend(self.base_cov.iter().map(|v| v.to_bits()));
        combine_seed(0x9d1_57a7e, &parts)
    }
}

fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// An N x d matrix of draws together with its generating seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
    pub seed: u64,
    pub spec_digest: u64,
}

impl SampleMatrix {
    /// Wrap externally supplied rows (e.g. read from CSV). Requires at least
    /// two rows of equal dimension and no non-finite entries.
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                min: 2,
                got: rows.len(),
            });
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::DimensionTooSmall { min: 1, got: 0 });
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: d,
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter {
                        detail: format!("non-finite sample entry {v}"),
                    });
                }
                data.push(v);
            }
        }
        Ok(Self {
            data,
            n: rows.len(),
            d,
            seed,
            spec_digest: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draw `n` i.i.d. rows from `spec`. Bit-identical output for identical
/// `(spec, n, seed)`.
pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::TooFewSamples { min: 1, got: 0 });
    }
    let d = spec.dim();
    let chol = Cholesky::new(spec.base_cov.clone()).ok_or(Error::NotPositiveDefinite {
        eigenvalue: min_symmetric_eigenvalue(&spec.base_cov),
    })?;
    // Row-major copy of the lower factor keeps the per-row transform cache
    // friendly.
    let l = chol.l();
    let mut l_rows = vec![0.0f64; d * d];
    for i in 0..d {
        for k in 0..=i {
            l_rows[i * d + k] = l[(i, k)];
        }
    }

    let chi = match spec.family {
        Family::MultivariateT { dof } => Some(ChiSquared::new(dof).map_err(|e| {
            Error::InvalidParameter {
                detail: format!("chi-squared({dof}): {e}"),
            }
        })?),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0f64; n * d];
    let mut g = vec![0.0f64; d];
    for row in 0..n {
        for slot in g.iter_mut() {
            *slot = StandardNormal.sample(&mut rng);
        }
        let out = &mut data[row * d..(row + 1) * d];
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l_rows[i * d + k] * g[k];
            }
            out[i] = spec.mean[i] + acc;
        }
        match spec.family {
            Family::Gaussian => {}
            Family::MultivariateT { dof } => {
                let w: f64 = chi.as_ref().unwrap().sample(&mut rng);
                let scale = (dof / w).sqrt();
                for (i, v) in out.iter_mut().enumerate() {
                    *v = spec.mean[i] + (*v - spec.mean[i]) * scale;
                }
            }
            Family::ExpScale { sigma } => {
                for v in out.iter_mut() {
                    *v = (sigma * *v).exp();
                }
            }
            Family::SinhArcsinhSkew { skew } => {
                // skew = 0 is the identity; keep it bit-exact.
                if skew != 0.0 {
                    for v in out.iter_mut() {
                        *v = (v.asinh() + skew).sinh();
                    }
                }
            }
        }
    }

    Ok(SampleMatrix {
        data,
        n,
        d,
        seed,
        spec_digest: spec.digest(),
    })
}

/// Random covariance flavor for the verification sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    Wishart,
    ExpDecay,
}

impl CovKind {
    pub fn name(&self) -> &'static str {
        match self {
            CovKind::Wishart => "wishart",
            CovKind::ExpDecay => "expdecay",
        }
    }
}

/// Generate `C = (1 - closeness) I + closeness K` where `K` is either a
/// trace-normalized Wishart draw (`A'A/m`, `A` an `m x d` standard Gaussian
/// matrix with `m = 2d`) or an exponential-decay correlation matrix
/// `K_ij = exp(-|i-j| / ell)` with `ell` uniform in `[1, d/4]`.
pub fn random_covariance(kind: CovKind, d: usize, closeness: f64, seed: u64) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: d });
    }
    if !(0.0..=1.0).contains(&closeness) {
        return Err(Error::InvalidParameter {
            detail: format!("closeness must lie in [0, 1], got {closeness}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = match kind {
        CovKind::Wishart => {
            let m = 2 * d;
            let mut a = DMatrix::<f64>::zeros(m, d);
            for v in a.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let mut w = a.transpose() * &a / m as f64;
            let trace: f64 = w.diagonal().iter().sum();
            w *= d as f64 / trace;
            w
        }
        CovKind::ExpDecay => {
            let lo = 1.0;
            let hi = (d as f64 / 4.0).max(lo);
            let ell = if hi > lo {
                let dist = Uniform::new(lo, hi).map_err(|e| Error::InvalidParameter {
                    detail: format!("length-scale range: {e}"),
                })?;
                dist.sample(&mut rng)
            } else {
                lo
            };
            DMatrix::from_fn(d, d, |i, j| {
                (-(i.abs_diff(j) as f64) / ell).exp()
            })
        }
    };
    let mut c = k * closeness;
    for i in 0..d {
        c[(i, i)] += 1.0 - closeness;
    }
    Ok(c)
}

/// Banded difference-of-covariance parameters: `delta_sq` on the diagonal and
/// `rho_sq` on the `m` sub/super diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandedDelta {
    pub d: usize,
    pub delta_sq: f64,
    pub rho_sq: f64,
    pub m: usize,
}

impl BandedDelta {
    pub fn new(d: usize, delta_sq: f64, rho_sq: f64, m: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall { min: 2, got: d });
        }
        if 2 * m >= d {
            return Err(Error::InvalidParameter {
                detail: format!("bandwidth m = {m} requires 2m < d = {d}"),
            });
        }
        Ok(Self {
            d,
            delta_sq,
            rho_sq,
            m,
        })
    }

    /// Materialize the symmetric banded matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| {
            if i == j {
                self.delta_sq
            } else if i.abs_diff(j) <= self.m {
                self.rho_sq
            } else {
                0.0
            }
        })
    }

    /// Number of off-diagonal band entries, exact in finite dimension:
    /// `2 * sum_{k=1..m} (d - k)`.
    pub fn band_entry_count(&self) -> usize {
        2 * (self.d * self.m - self.m * (self.m + 1) / 2)
    }

    /// Exact `||Delta||_F^2 = d delta^4 + (band count) rho^4`.
    pub fn frobenius_sq_exact(&self) -> f64 {
        self.d as f64 * self.delta_sq * self.delta_sq
            + self.band_entry_count() as f64 * self.rho_sq * self.rho_sq
    }

    /// Large-d approximation `d delta^4 + 2 d m rho^4`.
    pub fn frobenius_sq_asymptotic(&self) -> f64 {
        self.d as f64 * self.delta_sq * self.delta_sq
            + 2.0 * (self.d * self.m) as f64 * self.rho_sq * self.rho_sq
    }

    pub fn trace(&self) -> f64 {
        self.d as f64 * self.delta_sq
    }
}

/// Build the Gaussian pair `X ~ N((mu1,...,mu1), lambda^2 I + Delta/2)`,
/// `Y ~ N(0, lambda^2 I - Delta/2)` for a banded `Delta`.
pub fn banded_gaussian_pair(
    banded: &BandedDelta,
    mu1: f64,
    lambda: f64,
) -> Result<(DistributionSpec, DistributionSpec)> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let d = banded.d;
    let delta = banded.matrix();
    let lambda_sq = lambda * lambda;

    // Eigenvalues of lambda^2 I +/- Delta/2 are lambda^2 +/- eig(Delta)/2.
    let eigs = delta.clone().symmetric_eigen().eigenvalues;
    let mut min_plus = f64::INFINITY;
    let mut min_minus = f64::INFINITY;
    for &e in eigs.iter() {
        min_plus = min_plus.min(lambda_sq + 0.5 * e);
        min_minus = min_minus.min(lambda_sq - 0.5 * e);
    }
    let min_eig = min_plus.min(min_minus);
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: min_eig,
        });
    }

    let mut cov_x = delta.clone() * 0.5;
    let mut cov_y = delta * -0.5;
    for i in 0..d {
        cov_x[(i, i)] += lambda_sq;
        cov_y[(i, i)] += lambda_sq;
    }
    let spec_x = DistributionSpec::gaussian(DVector::from_element(d, mu1), cov_x)?;
    let spec_y = DistributionSpec::gaussian(DVector::zeros(d), cov_y)?;
    Ok((spec_x, spec_y))
}
