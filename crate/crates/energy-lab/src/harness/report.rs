//! Report emission: `sweep.csv`, `fits.csv`, and per-group scatter SVGs.
//!
//! All numeric fields print with Rust's shortest round-trip formatting, so
//! re-reading a CSV reproduces every scalar exactly and identical sweeps
//! produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::harness::svg::scatter_svg;
use crate::harness::sweep::{fit_cell_group, SweepRecord};
use crate::numerics::RegressionFit;

pub const SWEEP_CSV_HEADER: &str = "d,family,param,mu1,cov_kind,cov_index,seed,estimate,std_error,f_mu2,f_mu4,f_frob2,f_trace2,f_beta_mu,feature1,feature2,predicted,flags";
pub const FITS_CSV_HEADER: &str = "d,family,param,alpha1,alpha2,r_squared,n_records,status";

/// Regression result for one `(d, family)` group.
#[derive(Debug, Clone)]
pub struct GroupFit {
    pub d: usize,
    pub family: Family,
    pub fit: Option<RegressionFit>,
    pub n_records: usize,
    pub status: String,
}

/// Group records by `(d, family)` in first-appearance order.
pub fn group_records(records: &[SweepRecord]) -> Vec<((usize, Family), Vec<&SweepRecord>)> {
    let mut groups: Vec<((usize, Family), Vec<&SweepRecord>)> = Vec::new();
    for r in records {
        let key = (r.d, r.family);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
}

/// Fit every group; groups with fewer than 3 records are kept with status
/// `skipped` rather than failing the run.
pub fn fit_groups(records: &[SweepRecord]) -> Result<Vec<GroupFit>> {
    let mut fits = Vec::new();
    for ((d, family), members) in group_records(records) {
        if members.len() < 3 {
            fits.push(GroupFit {
                d,
                family,
                fit: None,
                n_records: members.len(),
                status: "skipped".to_string(),
            });
            continue;
        }
        let owned: Vec<SweepRecord> = members.iter().map(|r| (*r).clone()).collect();
        let fit = fit_cell_group(&owned)?;
        fits.push(GroupFit {
            d,
            family,
            fit: Some(fit),
            n_records: members.len(),
            status: "ok".to_string(),
        });
    }
    Ok(fits)
}

fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 200);
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let f = &r.functionals;
        let predicted = match r.predicted {
            Some(p) => format!("{p}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.d,
            r.family.name(),
            r.family.param_string(),
            r.mu1,
            r.cov_kind.name(),
            r.cov_index,
            r.seed,
            r.estimate.value,
            r.estimate.std_error,
            f.mu_norm_sq,
            f.mu_norm_4,
            f.delta_frob_sq,
            f.trace_sq,
            f.beta_dot_mu,
            r.feature1,
            r.feature2,
            predicted,
            r.flags.join(";"),
        ));
    }
    out
}

fn fits_csv(fits: &[GroupFit]) -> String {
    let mut out = String::new();
    out.push_str(FITS_CSV_HEADER);
    out.push('\n');
    for g in fits {
        let (a1, a2, r2) = match &g.fit {
            Some(f) => (
                format!("{}", f.alpha1),
                format!("{}", f.alpha2),
                format!("{}", f.r_squared),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            g.d,
            g.family.name(),
            g.family.param_string(),
            a1,
            a2,
            r2,
            g.n_records,
            g.status,
        ));
    }
    out
}

fn group_file_stem(d: usize, family: Family) -> String {
    let param = family.param_string().replace('.', "p");
    if param.is_empty() {
        format!("scatter_d{}_{}", d, family.name().to_lowercase())
    } else {
        format!("scatter_d{}_{}_{}", d, family.name().to_lowercase(), param)
    }
}

/// Write `sweep.csv`, `fits.csv`, and one scatter SVG per fitted group into
/// `out_dir`. Returns the written paths.
pub fn emit_report(
    records: &[SweepRecord],
    fits: &[GroupFit],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::TooFewSamples { min: 1, got: 0 });
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let sweep_path = out_dir.join("sweep.csv");
    fs::write(&sweep_path, sweep_csv(records))?;
    written.push(sweep_path);

    let fits_path = out_dir.join("fits.csv");
    fs::write(&fits_path, fits_csv(fits))?;
    written.push(fits_path);

    let groups = group_records(records);
    for g in fits {
        let Some(fit) = &g.fit else { continue };
        let members = groups
            .iter()
            .find(|((d, fam), _)| *d == g.d && *fam == g.family)
            .map(|(_, m)| m.as_slice())
            .unwrap_or(&[]);
        if members.is_empty() {
            continue;
        }
        // Gaussian groups plot the direct prediction; other families plot
        // the fitted two-term model.
        let points: Vec<(f64, f64)> = members
            .iter()
            .map(|r| {
                let model = r
                    .predicted
                    .unwrap_or(fit.alpha1 * r.feature1 + fit.alpha2 * r.feature2);
                (model, r.estimate.value)
            })
            .collect();
        let r_squared = if g.family == Family::Gaussian {
            crate::harness::sweep::gaussian_direct_check(
                &members.iter().map(|r| (*r).clone()).collect::<Vec<_>>(),
            )
            .map(|c| c.r_squared)
            .unwrap_or(fit.r_squared)
        } else {
            fit.r_squared
        };
        let title = format!("d={} {}", g.d, g.family.label());
        let svg = scatter_svg(
            &title,
            "predicted D^2",
            "estimated D^2",
            &points,
            Some(r_squared),
        );
        let path = out_dir.join(format!("{}.svg", group_file_stem(g.d, g.family)));
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
