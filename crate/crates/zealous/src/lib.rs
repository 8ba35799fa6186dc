//! Privacy-preserving publication of frequent search-log items.
//!
//! The pipeline: cap each user at `m` contributed items, histogram the
//! contributions at user level, drop counts below a threshold `τ`, add
//! Laplace(`λ`) noise, drop noisy counts at or below a second threshold
//! `τ′`, and publish what remains. Planning (`plan`) picks `(λ, τ, τ′)`
//! for a requested privacy level, `sanitizer` runs the release,
//! `analysis` verifies the guarantees numerically on small instances,
//! `utility` and `apps` measure what the release is still good for, and
//! `anonymity` provides the k-query-anonymity baseline the release is
//! compared against.
//!
//! ```
//! use zealous::plan::plan_probabilistic;
//! use zealous::sanitizer::sanitize;
//! use zealous::searchlog::{generate_synthetic, ExtractOptions, ItemKind, SynthConfig};
//!
//! let log = generate_synthetic(&SynthConfig::default(), 7).unwrap();
//! let plan = plan_probabilistic(5.0, 0.001, 1, log.user_count(), None).unwrap();
//! let released = sanitize(&log, ItemKind::Keyword, &plan, 7, &ExtractOptions::default()).unwrap();
//! for (item, noisy) in &released.entries {
//!     assert!(*noisy > plan.tau_prime);
//!     assert!(!item.is_empty());
//! }
//! ```

pub mod anonymity;
pub mod analysis;
pub mod apps;
pub mod export;
pub mod noise;
pub mod plan;
pub mod sanitizer;
pub mod searchlog;
pub mod utility;

#[cfg(doctest)]
pub mod book;
