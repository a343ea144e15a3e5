//! Reproducible verification sweep: generate distribution pairs, estimate
//! the squared energy distance, compute moment functionals, fit the two-term
//! regression (or apply the direct Gaussian estimation), and emit reports.

pub mod config;
pub mod report;
pub mod svg;
pub mod sweep;

pub use config::{default_families, parse_family_label, MomentSource, SweepConfig};
pub use report::{emit_report, fit_groups, group_records, GroupFit, FITS_CSV_HEADER,
    SWEEP_CSV_HEADER};
pub use sweep::{fit_cell_group, gaussian_direct_check, mdependent_check, run_sweep, DirectCheck,
    DirectCheckRow, MdependentCheck, SweepRecord, FLAG_MOMENTS_UNRELIABLE};
