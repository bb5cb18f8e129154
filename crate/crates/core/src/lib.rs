//! Building short ancestral recombination graphs (ARGs) with reinforcement
//! learning.
//!
//! The environment ([`genetics`]) treats a sample of binary SNP sequences as
//! the initial state of a deterministic episodic MDP whose actions are
//! coalescences, mutations and recombinations, with a reward of -1 per event.
//! Toy instances are solved exactly by value iteration ([`tabular`]); larger
//! samples use a one-hidden-layer value network ([`approximator`]) over a
//! block-multiset encoding ([`features`]) trained by gradient Monte Carlo
//! ([`trainer`]), optionally combined into [`ensemble`] policies. The
//! [`baseline`] module reimplements the ARG4WG heuristic for comparison and
//! [`samplegen`] simulates input data under the Hudson coalescent.

pub mod approximator;
pub mod baseline;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod genealogy;
pub mod genetics;
pub mod io;
pub mod rng;
pub mod samplegen;
pub mod tabular;
pub mod trainer;

pub use error::{ArgError, Result};
pub use genetics::{Action, Allele, Sequence, State};
