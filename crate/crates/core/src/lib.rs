//! Tabular-MDP toolkit around the plug-in planning pipeline: sample a
//! generative model, build the empirical MDP, plan in it with a black-box
//! solver, and evaluate the planned policy in the true MDP. On top of the
//! pipeline sit a verifier that numerically certifies the concentration
//! bounds governing it and a sweep harness that reproduces the
//! sample-complexity scaling at desk scale.

pub mod absorbing;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod generative;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod stream;
pub mod verify;

pub use error::{Error, Result};
pub use stream::RngSeed;

/// Entry point of the `plugin-mdp` binary.
pub fn run_cli() -> i32 {
    cli::run_from_env()
}
