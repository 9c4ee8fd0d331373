//! Categorical distributions and Gaussian mixtures: sampling, maximum
//! likelihood fitting, densities and divergences.

mod categorical;
mod gmm;
mod linalg;

pub use categorical::{
    fit_categorical_mle, kl_divergence, sample_categorical, total_variation, Categorical,
    CategoricalSampler, SampleCounts, PROB_SUM_TOL,
};
pub use gmm::{
    fit_gmm_em, fit_gmm_em_with, gmm_pdf, sample_gmm, EmFit, EmInit, EmOptions,
    GaussianComponent, GmmModel, PointSet, SingularityEvent, SingularityKind, VARIANCE_FLOOR,
};
