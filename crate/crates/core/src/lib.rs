//! Sharpness analysis of global minima in deep linear networks under the
//! quadratic loss.
//!
//! The crate implements, from second-order data moments upward:
//!
//! * exact loss and gradient evaluation of linear networks ([`moments`]);
//! * the Kronecker-factored Hessian at global minima and its top eigenpair,
//!   with a dense reduced path and a matrix-free power iteration ([`hessian`]);
//! * the widest-minima sharpness value `2m σ_max^{2(1−1/m)}`, canonical widest
//!   constructions, and the intermediate-gain / layer-coupling structure of
//!   widest solutions ([`widest`]);
//! * closed-form analysis of scalar networks, including the deceptive
//!   behavior of 1-D minima-interpolation plots ([`scalar`]);
//! * sampling of arbitrary global minima and a greedy random walk over the
//!   minima manifold that descends the sharpness toward its floor ([`sampler`]);
//! * full-batch gradient-descent training with identity initialization,
//!   balancedness tracking, and escape-from-sharp-minima experiments ([`trainer`]);
//! * JSON/CSV serialization of networks, moments, and reports ([`io`]).

pub mod error;
pub mod hessian;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod sampler;
pub mod scalar;
#[cfg(test)]
pub(crate) mod testutil;
pub mod trainer;
pub mod widest;

pub use error::{Error, Result};
pub use hessian::{
    full_hessian, lambda_max, nu_bound, phi_blocks, reduced_hessian, stability_check,
    theoretical_top_eigvec, EigMethod, HessianFactor, SharpnessReport,
};
pub use moments::{
    compute_moments, end_to_end, gradient, is_global_min, loss, loss_section, loss_section_over,
    moments_from_target, DataMoments, LinearNetwork, TargetMap,
};
pub use sampler::{greedy_widest_walk, sample_arbitrary_minimum, WalkConfig, WalkTrace};
pub use scalar::{
    deceive_construct, interp_compare, scalar_lambda_max, scalar_widest, InterpVerdict,
    ScalarNetwork, ScalarWidest,
};
pub use trainer::{
    escape_experiment, identity_init, max_step_size, train, TrainConfig, TrainMode, TrainTrace,
};
pub use widest::{
    canonical_widest, coupling_report, gain_profile, is_widest, verify_gains, widest_sharpness,
    CouplingReport, GainProfile, WidestVerdict,
};

/// Format tag written into every serialized document.
pub const FORMAT_VERSION: &str = "flatminima/1";
