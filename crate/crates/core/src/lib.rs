// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod cli;
pub mod constraint;
pub mod coupled;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod fields;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod source;
pub mod subsolvers;
pub mod tensor;
#[cfg(test)]
mod testing;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Which stress dynamics is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `κ > 0`: `φ = κ/2 |·|²_𝕍 + I_K`, solved by a proximal step.
    Regularized,
    /// `κ = 0`: `φ = I_K`, the sweeping process solved by catching-up.
    Sweeping,
}
