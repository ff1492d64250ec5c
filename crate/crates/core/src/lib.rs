pub mod dist;
pub mod dual;
pub mod encoding;
pub mod error;
pub mod inference;
pub mod models;
pub mod ode;
pub mod oracle;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod scenarios;
pub mod special;
pub mod surrogate;
pub mod tensor;

pub use dist::{mixture_components, moments_of, AtomicSpec, DistSpec, InputMoments, Marginal};
pub use dual::{eval_with_derivs, eval_with_derivs_on, Derivs, Dual1, Dual2};
pub use error::{Error, Result};
pub use models::{Model, ObservationPlan, Problem};
pub use real::Real;
pub use tensor::{frobenius, kron, moment_tensor, DenseTensor};
