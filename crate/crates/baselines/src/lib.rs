//! Competitor inference algorithms sharing the model code used by DPVI.

pub mod error;
pub mod gibbs;
pub mod mean_field;
pub mod pf;
pub mod resample;

pub use error::{Error, Result};
pub use gibbs::{collapsed_gibbs, collapsed_gibbs_with, GibbsTrace};
pub use mean_field::{mean_field_bound, mean_field_ising, MeanFieldConfig, MeanFieldResult, MeanFieldState};
pub use pf::{forward_backward, particle_filter, FilterOutput, ResamplePolicy};
pub use resample::{ess, multinomial_resample, stratified_resample};
