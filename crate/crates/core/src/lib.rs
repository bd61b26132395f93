//! Missing-data estimators for logistic regression, plus the Monte Carlo
//! lab used to compare them.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`table`] — in-memory data tables with explicit missing cells, CSV I/O,
//!   and missingness-pattern classification;
//! * [`missing`] — mechanisms (MCAR / MAR / NMAR) that delete cells from a
//!   complete table under a seeded stream;
//! * [`glm`] — weighted logistic and Gaussian-linear model fitting, the
//!   numerical workhorse everything else calls into;
//! * [`estimators`] — the four ways of dealing with incomplete rows:
//!   complete-case analysis, inverse-probability weighting, multiple
//!   imputation with Rubin pooling, and direct maximum likelihood via EM;
//! * [`simlab`] — the simulation study itself: data generator, per-trial
//!   driver, and Monte Carlo aggregation into bias / variance / MSE and
//!   standard-error accuracy summaries.
//!
//! Everything that consumes randomness takes a [`stream::StreamKey`], so
//! results are reproducible for a given seed and independent of thread
//! scheduling.

pub mod estimators;
pub mod glm;
pub mod linalg;
pub mod missing;
pub mod quadrature;
pub mod simlab;
pub mod stream;
pub mod table;
