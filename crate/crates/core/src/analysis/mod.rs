//! Monte Carlo estimators, rate fits and bound checks.

pub mod bounds;
pub mod holder;
pub mod moments;
pub mod rate;
pub mod recursion;
pub mod stats;
pub mod strong;

pub use bounds::{
    bound_check_suite, default_bound_params, default_bound_specs, BoundCheck, BoundSetup, BoundSpec,
};
pub use holder::{
    drift_path_holder, holder_norm_estimate, holder_study, HolderReport, HolderSetup, HolderStudy,
    PairPolicy,
};
pub use moments::{
    cir_moment_study, moment_estimate, scheme_moment_sup, MomentEstimate, MomentRow, MomentSetup,
    SupMoment,
};
pub use rate::{fit_rate, rate_study, RateReport, RateStudy};
pub use recursion::recursion_bound_check;
pub use strong::{strong_error, strong_errors, ErrorReport, StrongErrorSetup};
