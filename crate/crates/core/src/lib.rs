//! Scarce-history load forecasting: a pretrain-then-fine-tune encoder-decoder
//! transformer, six classical benchmark forecasters, and a harness that
//! scores them over the 3/5/7/15/30-day training cases.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod hyperopt;
pub mod metrics;
pub mod nn;
pub mod series;
pub mod tsfm;

pub use error::{Error, Result};
