//! Sweep configuration: a flat `key = value` file with a `[sweep]` section.

use serde::Deserialize;

use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::estimators::EstimatorMode;

/// Where non-Gaussian difference moments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    /// Closed forms per family, Monte-Carlo fallback where none exists.
    Analytic,
    /// Plug-in estimates from the sweep's own samples.
    Sample,
}

/// Fully validated sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub families: Vec<Family>,
    pub mu1_values: Vec<f64>,
    pub n_cov: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub estimator_mode: EstimatorMode,
    pub closeness: f64,
    pub moment_source: MomentSource,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dims: vec![16, 32, 64],
            families: default_families(),
            mu1_values: vec![0.02, 0.04, 0.06],
            n_cov: 28,
            n_samples: 1 << 14,
            master_seed: 0,
            estimator_mode: EstimatorMode::UStat,
            closeness: 0.1,
            moment_source: MomentSource::Analytic,
        }
    }
}

/// The ten transformation labels of the verification sweep.
pub fn default_families() -> Vec<Family> {
    let mut fams = vec![Family::Gaussian];
    for dof in [2.0, 3.0, 5.0] {
        fams.push(Family::MultivariateT { dof });
    }
    for sigma in [0.75, 1.0, 1.25] {
        fams.push(Family::ExpScale { sigma });
    }
    for skew in [0.05, 0.1, 0.2] {
        fams.push(Family::SinhArcsinhSkew { skew });
    }
    fams
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |detail: String| Error::InvalidConfig { detail };
        if self.dims.is_empty() {
            return Err(invalid("dims must not be empty".into()));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(invalid(format!("dims entries must be >= 2, got {d}")));
        }
        if self.families.is_empty() {
            return Err(invalid("families must not be empty".into()));
        }
        if self.mu1_values.is_empty() {
            return Err(invalid("mu1_values must not be empty".into()));
        }
        if self.n_cov < 3 {
            return Err(invalid(format!(
                "n_cov must be >= 3 (the regression needs spread), got {}",
                self.n_cov
            )));
        }
        if self.n_samples < 1 << 10 {
            return Err(invalid(format!(
                "n_samples must be >= 1024, got {}",
                self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.closeness) {
            return Err(invalid(format!(
                "closeness must lie in [0, 1], got {}",
                self.closeness
            )));
        }
        Ok(())
    }

    /// Parse from the `[sweep]` config text format. Unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfigFile = toml::from_str(text).map_err(|e| Error::InvalidConfig {
            detail: e.to_string(),
        })?;
        let raw = raw.sweep;
        let defaults = SweepConfig::default();
        let families = match raw.families {
            Some(labels) => labels
                .iter()
                .map(|l| parse_family_label(l))
                .collect::<Result<Vec<_>>>()?,
            None => defaults.families,
        };
        let estimator_mode = match raw.estimator_mode {
            Some(s) => EstimatorMode::parse(&s).ok_or_else(|| Error::InvalidConfig {
                detail: format!("estimator_mode must be \"ustat\" or \"vstat\", got \"{s}\""),
            })?,
            None => defaults.estimator_mode,
        };
        let moment_source = match raw.moments.as_deref() {
            None => defaults.moment_source,
            Some("analytic") => MomentSource::Analytic,
            Some("sample") => MomentSource::Sample,
            Some(other) => {
                return Err(Error::InvalidConfig {
                    detail: format!("moments must be \"analytic\" or \"sample\", got \"{other}\""),
                })
            }
        };
        let cfg = SweepConfig {
            dims: raw.dims.unwrap_or(defaults.dims),
            families,
            mu1_values: raw.mu1_values.unwrap_or(defaults.mu1_values),
            n_cov: raw.n_cov.unwrap_or(defaults.n_cov),
            n_samples: raw.n_samples.unwrap_or(defaults.n_samples),
            master_seed: raw.master_seed.unwrap_or(defaults.master_seed),
            estimator_mode,
            closeness: raw.closeness.unwrap_or(defaults.closeness),
            moment_source,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfigFile {
    sweep: RawSweepConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepConfig {
    dims: Option<Vec<usize>>,
    families: Option<Vec<String>>,
    mu1_values: Option<Vec<f64>>,
    n_cov: Option<usize>,
    n_samples: Option<usize>,
    master_seed: Option<u64>,
    estimator_mode: Option<String>,
    closeness: Option<f64>,
    moments: Option<String>,
}

/// Parse a family label: `Gaussian`, `MultivariateT(3)`, `Exp(0.75)`, or
/// `SinhArcsinh(0.1)`.
pub fn parse_family_label(label: &str) -> Result<Family> {
    let trimmed = label.trim();
    let bad = || Error::InvalidConfig {
        detail: format!(
            "unknown family label \"{trimmed}\"; expected Gaussian, MultivariateT(dof), \
             Exp(sigma), or SinhArcsinh(skew)"
        ),
    };
    if trimmed.eq_ignore_ascii_case("gaussian") {
        return Ok(Family::Gaussian);
    }
    let (name, rest) = trimmed.split_once('(').ok_or_else(bad)?;
    let arg = rest.strip_suffix(')').ok_or_else(bad)?;
    let value: f64 = arg.trim().parse().map_err(|_| bad())?;
    let family = match name.trim().to_ascii_lowercase().as_str() {
        "multivariatet" | "t" => Family::MultivariateT { dof: value },
        "exp" | "expscale" => Family::ExpScale { sigma: value },
        "sinharcsinh" | "sinh" => Family::SinhArcsinhSkew { skew: value },
        _ => return Err(bad()),
    };
    family_label_is_valid(&family)?;
    Ok(family)
}

fn family_label_is_valid(family: &Family) -> Result<()> {
    match family {
        Family::MultivariateT { dof } if !(*dof > 0.0) => Err(Error::InvalidConfig {
            detail: format!("MultivariateT dof must be positive, got {dof}"),
        }),
        Family::ExpScale { sigma } if !(*sigma > 0.0) => Err(Error::InvalidConfig {
            detail: format!("Exp sigma must be positive, got {sigma}"),
        }),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_with_ten_families() {
        let cfg = SweepConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.families.len(), 10);
        assert_eq!(cfg.n_cov, 28);
        assert_eq!(cfg.n_samples, 1 << 14);
    }

    #[test]
    fn parses_family_labels() {
        assert_eq!(parse_family_label("Gaussian").unwrap(), Family::Gaussian);
        assert_eq!(
            parse_family_label("MultivariateT(3)").unwrap(),
            Family::MultivariateT { dof: 3.0 }
        );
        assert_eq!(
            parse_family_label("Exp(0.75)").unwrap(),
            Family::ExpScale { sigma: 0.75 }
        );
        assert_eq!(
            parse_family_label("SinhArcsinh(0.1)").unwrap(),
            Family::SinhArcsinhSkew { skew: 0.1 }
        );
        assert!(parse_family_label("Cauchy(1)").is_err());
        assert!(parse_family_label("Exp(-1)").is_err());
    }

    #[test]
    fn parses_toml_with_defaults() {
        let cfg = SweepConfig::from_toml_str(
            r#"
            [sweep]
            dims = [16]
            families = ["Gaussian"]
            n_cov = 4
            n_samples = 4096
            master_seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.dims, vec![16]);
        assert_eq!(cfg.families, vec![Family::Gaussian]);
        assert_eq!(cfg.mu1_values, vec![0.02, 0.04, 0.06]);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.estimator_mode, EstimatorMode::UStat);
    }

    #[test]
    fn unknown_keys_are_reported() {
        let err = SweepConfig::from_toml_str(
            r#"
            [sweep]
            dims = [16]
            n_covv = 4
            "#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_covv"), "message should name the key: {msg}");
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(SweepConfig::from_toml_str("[sweep]\nn_cov = 2\n").is_err());
        assert!(SweepConfig::from_toml_str("[sweep]\nn_samples = 512\n").is_err());
        assert!(SweepConfig::from_toml_str("[sweep]\ndims = [1]\n").is_err());
        assert!(SweepConfig::from_toml_str("[sweep]\ncloseness = 1.5\n").is_err());
        assert!(SweepConfig::from_toml_str("[sweep]\nestimator_mode = \"wstat\"\n").is_err());
    }
}
