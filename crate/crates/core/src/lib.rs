//! Evaluation harness for text-guided class-agnostic counting models.
//!
//! Loads dot-annotated corpora and per-prompt model outputs (density maps or
//! instance points), then scores how well each model grounds its prompt:
//!
//! * [`protocols::run_negative_label_test`] probes every image with every
//!   absent category and reports NMN and PCCN;
//! * [`protocols::run_distractor_direct`] and
//!   [`protocols::run_distractor_mosaic`] report patch-wise counting
//!   precision, recall, F1 and GAME;
//! * [`protocols::run_classic`] reports MAE and RMSE;
//! * [`semsim`] relates negative-prompt errors to text-embedding similarity.

pub mod corpus;
pub mod density;
pub mod error;
pub mod metrics;
mod numeric;
pub mod protocols;
pub mod report;
pub mod semsim;

pub use error::{EntryKey, Error, Result};
pub use numeric::{mean, pairwise_sum, quantile_sorted};
