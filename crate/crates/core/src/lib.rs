//! Balancing trees for interpretable average-treatment-effect estimation.
//!
//! The tree recursively splits a cohort on the covariate with the largest
//! absolute standardized mean difference (ASMD) between treatment arms, picks
//! the cut most associated with treatment (Fisher's exact or χ² test), prunes
//! splits that do not survive a Holm-Bonferroni correction, and flags leaves
//! whose treatment prevalence falls outside overlap cutoffs. Effects are then
//! estimated inside the non-violating leaves and averaged.
//!
//! ```no_run
//! use bicause_tree::{synthgen, tree::{self, FitConfig}, estimators::{self, LeafEstimator}};
//!
//! let sim = synthgen::gen_natural_experiment(20_000, 7).unwrap();
//! let fitted = tree::fit(&sim.dataset, &FitConfig::default()).unwrap();
//! let report = estimators::tree_ate(&fitted, &sim.dataset, LeafEstimator::Marginal).unwrap();
//! println!("ATE = {:.4}", report.ate);
//! ```

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod eval;
mod linalg;
pub mod positivity;
pub mod rng;
pub mod stats;
pub mod synthgen;
pub mod tree;

pub use dataset::{ColumnSchema, Dataset};
pub use error::{Error, Result};
pub use tree::{FitConfig, Tree};
