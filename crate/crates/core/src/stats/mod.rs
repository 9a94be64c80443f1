//! Statistical kernel: the analytic source-free step-size law, one- and
//! two-sample Kolmogorov-Smirnov tests, geometric tail fitting for passage
//! times, and the binned mutual-information privacy estimator.

mod ks;
mod mi;
mod reference;
mod tail;

pub use ks::{kolmogorov_pvalue, ks_one_sample, ks_two_sample, ks_two_sample_asymptotic, ks_two_sample_exact, KsResult};
pub use mi::{mi_estimate, plugin_mi, MiReport, StepBins};
pub use reference::ReferenceCdf;
pub use tail::{fit_geometric_tail, TailFit};
