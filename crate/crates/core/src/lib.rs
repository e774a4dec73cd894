//! Exact stochastic simulation of the continuum seed-bank coalescent,
//! its accelerated/decelerated variants, and the dual Wright-Fisher-type
//! diffusion, together with the closed forms they can be checked against.
//!
//! The crate is organized around the block-counting chain `(n, m)`: `n`
//! active lineages plus an integer-valued measure `m` of dormant lineages,
//! each dormant lineage carrying its own wake-up rate drawn from a finite
//! rate measure on `(0, ∞)`.
//!
//! - [`measure`]: the rate measure (discrete atoms or a Gamma family) and
//!   its integrals.
//! - [`bank`]: the dormant-block multiset with O(log n) rate-proportional
//!   sampling.
//! - [`engine`]: Gillespie simulation of the block-counting chain and the
//!   statistics extracted from it.
//! - [`partition`]: the full marked-partition process at small sample
//!   sizes, via both the jump-chain and the graphical construction.
//! - [`oracles`]: closed forms and small linear systems used as ground
//!   truth.
//! - [`diffusion`]: the dual diffusion, moment duality, and fixation
//!   checks.
//! - [`experiments`]: batch Monte Carlo harness with deterministic,
//!   reproducible output.

pub mod bank;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod measure;
pub mod oracles;
pub mod partition;
pub mod rng;
pub mod stats;

pub use bank::DormantBank;
pub use engine::{BlockCountState, SimOutcome, Variant};
pub use error::SimError;
pub use measure::RateMeasure;
