//! Joint models over the full schema, estimated from an internal and an
//! external table that share only the overlap attributes.

mod em;
mod fit;
mod model;

pub use em::{fit_latent_nb, EmConfig, EmFit, EmRun, EmState, Responsibilities};
pub use fit::{fit_independence_given_overlap, fit_independent, fit_marginal_preservation};
pub use model::{
    log_likelihood, log_likelihood_with_floor, FitInfo, JointModel, LatentNb, LogLikelihood, MarginalEvaluator,
    Side, Structure, Variant, DEFAULT_LOG_FLOOR,
};
