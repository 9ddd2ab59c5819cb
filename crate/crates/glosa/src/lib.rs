//! Signalized-intersection microsimulation with a hybrid-action speed
//! advisory learner.
//!
//! The crate simulates a three-lane approach to a fixed-time traffic light,
//! with stochastic human-driven traffic and one connected vehicle that can
//! accept speed advisories. On top of the simulator it provides a
//! reinforcement-learning environment, a small hybrid-action policy network
//! trained with clipped policy optimization, and rule-based and
//! car-following baselines, all reachable from one command-line binary.

pub mod env;
pub mod error;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod sim;

pub use error::{GlosaError, Result};

// Compile and run the guide's code blocks as doctests so the book cannot
// drift from the crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/index.md")]
    mod index {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/emissions.md")]
    mod emissions {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
