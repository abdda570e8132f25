//! Privacy-aware spatial task assignment under local differential privacy.
//!
//! Workers publish Laplace-obfuscated distances to the tasks they can reach,
//! spending per-pair privacy budgets. Two solvers turn those noisy reports into
//! a one-to-one assignment:
//!
//! * [`puce`]: proposal rounds resolved by probabilistic conflict elimination.
//! * [`pgt`]: best-response dynamics of an exact potential game.
//!
//! [`baselines`] adds greedy and Hungarian references and the non-private
//! variants, and [`harness`] drives seeded experiments and writes metrics CSV.

pub mod baselines;
pub mod cea;
pub mod compare;
pub mod harness;
pub mod model;
pub mod pgt;
pub mod privacy;
pub mod puce;

pub use compare::{effective_pair, pcf, ppcf, utility_shift, Bid, EffectivePair};
pub use model::{Instance, MatchState, Point, Task, ValueFunctions, Worker};
pub use privacy::{BudgetBook, LdpLedger, ObservationSet};
