//! Random neural networks, single-step gradient attacks, Monte-Carlo landscape
//! statistics and closed-form concentration bounds.
//!
//! The crate is organised bottom-up:
//!
//! * [`activation`]: ReLU and tanh with exact derivatives and Gaussian moments.
//! * [`network`]: random networks of any depth, exact value/gradient/Hessian products.
//! * [`attack`]: one-step gradient attack, smallest flipping step, universal
//!   direction and a normalised multi-step baseline.
//! * [`landscape`]: Monte-Carlo estimators for value, gradient, Hessian and
//!   gradient-deviation statistics.
//! * [`bounds`]: closed-form tail bounds and their empirical verification.
//! * [`experiments`]: seeded `(d, k, L)` sweeps and CSV / JSON-lines output.
//! * [`cli`]: the `advland` command line.

pub mod activation;
pub mod attack;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod landscape;
pub mod linalg;
pub mod network;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod trials;

pub use activation::Activation;
pub use attack::AttackOutcome;
pub use bounds::BoundReport;
pub use error::{Error, Result};
pub use experiments::{SweepConfig, SweepResult};
pub use landscape::LandscapeStats;
pub use network::{sample_input, InputPoint, Network};
