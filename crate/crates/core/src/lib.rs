//! Stochastic multi-armed bandits on `[0, 1]` rewards.
//!
//! The centrepiece is the KL-UCB(alpha) policy, which pulls the arm
//! maximizing `sup{mu : d(mean_i, mu) <= log(t / N_i^alpha) / N_i}`;
//! `alpha = 0` is KL-UCB and `alpha = 1` is KL-UCB+. Around it sit
//!
//! * [`kl`]: Bernoulli KL divergence, its inversion and Lambert W0;
//! * [`env`]: seeded reward environments;
//! * [`policy`]: KL-UCB(alpha), UCB1, Thompson sampling and IMED;
//! * [`bounds`]: the finite-time regret bound and the asymptotic constant;
//! * [`sim`]: the Monte Carlo driver and concentration audits;
//! * [`config`] and [`experiment`]: the command-line front end.

pub mod bounds;
pub mod config;
pub mod env;
pub mod experiment;
pub mod kl;
pub mod policy;
pub mod sim;

pub use bounds::{asymptotic_slope, theorem1_bound, BoundReport};
pub use env::{BanditInstance, RewardModel, SeedSpec};
pub use kl::{bernoulli_kl, kl_ucb_invert, lambert_w0, Divergence, Probability};
pub use policy::{ucb_score, ArmState, PolicyKind, PolicySpec, PolicyState};
pub use sim::{run_batch, run_single, AggregateResult, RegretTrace};
