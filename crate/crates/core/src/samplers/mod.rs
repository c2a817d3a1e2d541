//! Posterior samplers over trees.

pub mod chain;
pub mod hmc;
pub mod mh;

pub use chain::{data_init, default_init, run_chain, SamplerConfig};
pub use hmc::{
    hmc_leapfrog, hmc_step, CrossingChooser, FlatPotential, HmcConfig, HmcOutcome, HmcState, Potential,
    PosteriorPotential, ScriptedChooser, UniformChooser,
};
pub use mh::{
    acceptance_probability, length_log_ratio, mh_iteration, mh_length_update, mh_topology_update,
    sample_truncated_normal, ChainState, MhConfig, MhMode,
};
