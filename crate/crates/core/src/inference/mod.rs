//! Likelihood-based inference on snapshot data.

mod data;
mod fim;
mod loglik;
mod mcmc;
mod optim;
mod profile;

pub use data::SnapshotData;
pub use fim::{fim, moment_map, FimReport};
pub use loglik::{Experiment, Loglik};
pub use mcmc::{map_estimate, mcmc, pooled_moments, run_chain, Adaptation, McmcChain, McmcOptions};
pub use optim::{maximize, nelder_mead, MleResult, NelderMeadOptions, OptimResult, StartReport};
pub use profile::{profile, ProfileOptions, ProfilePoint, ProfileResult, Verdict, PROFILE_THRESHOLD};
