//! Simulations of unlearning through partial model collapse.
//!
//! Iteratively refitting a model on its own samples loses information; when
//! the refit data is anchored with retain data, or curated by a reward that
//! prefers answers unlike the ground truth, the loss can be aimed at the
//! forget set. The modules below build that story at desk scale:
//!
//! * [`distributions`]: categorical and Gaussian-mixture models.
//! * [`markov`]: exact absorbing-chain analysis of categorical relearning.
//! * [`relearn`]: sampled and analytic relearning loops.
//! * [`curation`]: Bradley-Terry selection and the best-of-n density update.
//! * [`textreward`]: ROUGE-L recall and the `1 - ROUGE-L` reward.
//! * [`qa_unlearn`]: a tabular question-answering model and its unlearning loop.
//! * [`harness`]: seeded experiment runs written to CSV.

pub mod curation;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod markov;
pub mod qa_unlearn;
pub mod relearn;
pub mod rng;
pub mod table;
pub mod textreward;

pub use error::{Error, Result};
