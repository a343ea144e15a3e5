//! Sample estimators of the energy score and the squared energy distance.
//!
//! The O(N^2 d) pairwise kernels accumulate per-row partial sums with
//! compensated summation and then reduce the row partials in index order.
//! The parallel path (feature `parallel`, on by default) distributes rows
//! across threads but reduces in the same fixed order, so estimates are
//! bit-identical to the sequential path for a given input.

use crate::distributions::SampleMatrix;
use crate::error::{Error, Result};
use crate::numerics::{kahan_sum, Kahan};

/// Normalization of the within-sample pairwise terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// All ordered pairs `n != m`, divided by `N (N - 1)`. Unbiased.
    UStat,
    /// All pairs including `n = m`, divided by `N^2`.
    VStat,
}

impl EstimatorMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ustat" | "u" => Some(EstimatorMode::UStat),
            "vstat" | "v" => Some(EstimatorMode::VStat),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::UStat => "ustat",
            EstimatorMode::VStat => "vstat",
        }
    }
}

/// Point estimate with a leave-one-out jackknife standard error.
///
/// The jackknife runs over the rows of the first sample only and is an
/// approximation; it is reported for tolerance banding, not inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_x: usize,
    pub n_y: usize,
}

/// Euclidean distance with a fixed 4-lane unrolled accumulation order.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let quads = n & !3;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut k = 0;
    while k < quads {
        let d0 = a[k] - b[k];
        let d1 = a[k + 1] - b[k + 1];
        let d2 = a[k + 2] - b[k + 2];
        let d3 = a[k + 3] - b[k + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
        k += 4;
    }
    while k < n {
        let d = a[k] - b[k];
        s0 += d * d;
        k += 1;
    }
    ((s0 + s1) + (s2 + s3)).sqrt()
}

/// For each row of `x`, the compensated sum of distances to every row of `y`.
///
/// With `x` and `y` the same matrix this doubles as the within-sample kernel:
/// the diagonal contributes an exactly-zero distance, so the row sum equals
/// the sum over `j != i` while keeping the operation sequence identical to
/// the cross kernel.
pub fn pairwise_row_sums(x: &SampleMatrix, y: &SampleMatrix) -> Vec<f64> {
    let row_sum = |i: usize| -> f64 {
        let xi = x.row(i);
        let mut acc = Kahan::new();
        for yj in y.rows() {
            acc.add(euclidean(xi, yj));
        }
        acc.total()
    };
    crate::maybe_parallel_map(0..x.n_rows(), row_sum)
}

/// Sequential variant of [`pairwise_row_sums`]; same math, used as the
/// baseline in benchmarks.
pub fn pairwise_row_sums_seq(x: &SampleMatrix, y: &SampleMatrix) -> Vec<f64> {
    (0..x.n_rows())
        .map(|i| {
            let xi = x.row(i);
            let mut acc = Kahan::new();
            for yj in y.rows() {
                acc.add(euclidean(xi, yj));
            }
            acc.total()
        })
        .collect()
}

fn check_pair(x: &SampleMatrix, y: &SampleMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    if x.n_rows() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: x.n_rows(),
        });
    }
    if y.n_rows() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: y.n_rows(),
        });
    }
    Ok(())
}

/// Energy score of an ensemble forecast against a single observation:
/// `(1/N) sum ||x_n - y|| - (1/(2N(N-1))) sum_{n != m} ||x_n - x_m||`.
pub fn energy_score(forecast: &SampleMatrix, observation: &[f64]) -> Result<f64> {
    let n = forecast.n_rows();
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n });
    }
    if forecast.dim() != observation.len() {
        return Err(Error::DimensionMismatch {
            left: forecast.dim(),
            right: observation.len(),
        });
    }
    let mut cross = Kahan::new();
    for row in forecast.rows() {
        cross.add(euclidean(row, observation));
    }
    let within = kahan_sum(&pairwise_row_sums(forecast, forecast));
    let n_f = n as f64;
    Ok(cross.total() / n_f - within / (2.0 * n_f * (n_f - 1.0)))
}

/// Arithmetic mean of per-time energy scores.
pub fn averaged_energy_score(
    forecasts: &[SampleMatrix],
    observations: &[Vec<f64>],
) -> Result<f64> {
    if forecasts.len() != observations.len() {
        return Err(Error::DimensionMismatch {
            left: forecasts.len(),
            right: observations.len(),
        });
    }
    if forecasts.is_empty() {
        return Err(Error::TooFewSamples { min: 1, got: 0 });
    }
    let mut acc = Kahan::new();
    for (f, y) in forecasts.iter().zip(observations) {
        acc.add(energy_score(f, y)?);
    }
    Ok(acc.total() / forecasts.len() as f64)
}

/// Options for [`energy_distance_sq_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateOptions {
    /// When set, deterministically thin rows so the cross-term pair count
    /// stays at or below this bound. Off by default; the thinned estimate is
    /// an approximation on fewer rows.
    pub max_pairs: Option<u64>,
}

/// Squared energy distance estimate with jackknife standard error.
pub fn energy_distance_sq(
    x: &SampleMatrix,
    y: &SampleMatrix,
    mode: EstimatorMode,
) -> Result<EstimateWithError> {
    energy_distance_sq_with(x, y, mode, &EstimateOptions::default())
}

/// Squared energy distance with explicit options.
pub fn energy_distance_sq_with(
    x: &SampleMatrix,
    y: &SampleMatrix,
    mode: EstimatorMode,
    opts: &EstimateOptions,
) -> Result<EstimateWithError> {
    check_pair(x, y)?;
    if let Some(max_pairs) = opts.max_pairs {
        let pairs = x.n_rows() as u64 * y.n_rows() as u64;
        if pairs > max_pairs {
            let shrink = ((pairs as f64 / max_pairs as f64).sqrt()).ceil() as usize;
            let x_thin = thin_rows(x, shrink);
            let y_thin = thin_rows(y, shrink);
            return energy_distance_sq_with(&x_thin, &y_thin, mode, &EstimateOptions::default());
        }
    }

    let n_x = x.n_rows();
    let n_y = y.n_rows();
    let a = pairwise_row_sums(x, y);
    let b = pairwise_row_sums(x, x);
    let c = pairwise_row_sums(y, y);
    let s_a = kahan_sum(&a);
    let s_b = kahan_sum(&b);
    let s_c = kahan_sum(&c);

    let nx = n_x as f64;
    let ny = n_y as f64;
    let value = match mode {
        EstimatorMode::UStat => {
            s_a / (nx * ny) - s_b / (2.0 * nx * (nx - 1.0)) - s_c / (2.0 * ny * (ny - 1.0))
        }
        EstimatorMode::VStat => s_a / (nx * ny) - s_b / (2.0 * nx * nx) - s_c / (2.0 * ny * ny),
    };

    // Leave-one-out replicates over x rows from the precomputed row sums.
    let c_term = match mode {
        EstimatorMode::UStat => s_c / (2.0 * ny * (ny - 1.0)),
        EstimatorMode::VStat => s_c / (2.0 * ny * ny),
    };
    let nx_m1 = nx - 1.0;
    let replicates: Vec<f64> = (0..n_x)
        .map(|i| {
            let cross = (s_a - a[i]) / (nx_m1 * ny);
            let within = match mode {
                EstimatorMode::UStat => {
                    if n_x >= 3 {
                        (s_b - 2.0 * b[i]) / (2.0 * nx_m1 * (nx_m1 - 1.0))
                    } else {
                        0.0
                    }
                }
                EstimatorMode::VStat => (s_b - 2.0 * b[i]) / (2.0 * nx_m1 * nx_m1),
            };
            cross - within - c_term
        })
        .collect();
    let mean_rep = kahan_sum(&replicates) / nx;
    let mut ss = Kahan::new();
    for r in &replicates {
        let dev = r - mean_rep;
        ss.add(dev * dev);
    }
    let std_error = (nx_m1 / nx * ss.total()).sqrt();

    Ok(EstimateWithError {
        value,
        std_error,
        n_x,
        n_y,
    })
}

fn thin_rows(x: &SampleMatrix, stride: usize) -> SampleMatrix {
    let rows: Vec<Vec<f64>> = (0..x.n_rows())
        .step_by(stride.max(1))
        .map(|i| x.row(i).to_vec())
        .collect();
    SampleMatrix::from_rows(&rows, x.seed).expect("thinning preserves validity")
}
