//! Desk-scale numerics for time-inhomogeneous integer-valued random walks.
//!
//! The crate computes constrained-path probabilities exactly by dynamic
//! programming over the lattice, cross-checks them against independent oracles
//! (exhaustive enumeration, the reflection principle, Fourier inversion, a
//! tilt identity, and seeded Monte Carlo), and sweeps families of admissible
//! increment laws to certify theorem-shaped bounds: ballot-type positivity,
//! small-ball and bridge estimates, excursions, one-time tails, a local limit
//! theorem envelope, and Gaussian-bridge references built on the Jacobi theta
//! function.
//!
//! Start with the runnable examples (`cargo run --release --example ...`) or
//! the `tiltwalk` binary (`tiltwalk verify all`).

pub mod config;
pub mod engine;
pub mod gaussian;
pub mod harness;
pub mod laws;
pub mod montecarlo;
pub mod schedule;
pub mod spectral;

pub use laws::{
    truncate_couple, ClassParams, IncrementLaw, LawError, MembershipVerdict, Moment,
    Periodicity, TruncationResult,
};
pub use schedule::{solve_tilt_for_mean, ScheduleLiteral, StepSchedule, TiltSchedule};
