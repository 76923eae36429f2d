//! Simulation of one-dimensional driftless SDEs `dX = σ(t, X) dW` by a
//! random time change of Brownian motion.
//!
//! The solution is represented as `X_t = ξ_{τ(t)}` where ξ is a Brownian
//! motion started at `X_0` and τ is the inverse of the solution of the random
//! ODE `φ' = σ(φ, ξ)^-2`. The scheme discretises ξ on a grid of step `1/n`,
//! integrates φ with explicit Euler and inverts it exactly:
//!
//! ```
//! use tcbm::{builtin_coefficient, BrownianPath, SamplePath};
//!
//! let sigma = builtin_coefficient("smooth-sin", &[2.0, 1.0]).unwrap();
//! let xi = BrownianPath::generate(64, 10.0, 0.0, 42, 0).unwrap();
//! let path = SamplePath::build(xi, &sigma, 1.0).unwrap();
//! let x_half = path.evaluate(0.5).unwrap();
//! assert!(x_half.is_finite());
//! ```
//!
//! [`experiment`] measures strong convergence rates against coupled
//! fine-resolution references; [`baseline`] provides Euler–Maruyama for
//! comparison.

pub mod baseline;
pub mod brownian;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod experiment;
mod grid;
pub mod timechange;

pub use baseline::{em_simulate, EmPath};
pub use brownian::BrownianPath;
pub use diffusion::{builtin_coefficient, check_contract, DiffusionCoefficient, Domain, SmoothnessClass};
pub use error::{Error, Result};
pub use experiment::{
    compare_schemes, run_experiment, strong_error_one_sample, ExperimentConfig, RateReport, Scheme,
};
pub use timechange::{SamplePath, TimeChangePath};
