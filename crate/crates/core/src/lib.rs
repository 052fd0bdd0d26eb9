//! Crossover times of random-access (hard-core) dynamics on bipartite
//! interference graphs with time-varying activation rates.
//!
//! Modules, bottom-up:
//! - [`topology`]: graphs, configurations, the stochastic order.
//! - [`rates`]: power-law activation schedules and the clock rate.
//! - [`exact_oracle`]: frozen-time kernel, stationary law, hitting
//!   probabilities, mean hitting times, effective resistance.
//! - [`landscape`]: exact order-of-magnitude arithmetic for energy barriers.
//! - [`simulator`]: site-clock trajectory simulation, couplings,
//!   regeneration logs.
//! - [`predictor`]: the time-varying exponential law and closed forms.
//! - [`harness`]: experiment configs, verification reports, CSV output.

pub mod exact_oracle;
pub mod harness;
pub mod predictor;
pub mod landscape;
pub mod rates;
pub mod simulator;
pub mod topology;
