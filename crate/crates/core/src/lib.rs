//! Continual-learning laboratory: small MLPs trained on task sequences,
//! classic learners, and measurements of what they forget.
//!
//! The guide in `book/` walks through each module; its snippets run as
//! doctests.

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod tasks;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/forgetting.md")]
    mod forgetting {}
    #[doc = include_str!("../../../book/src/quadratic.md")]
    mod quadratic {}
    #[doc = include_str!("../../../book/src/curvature.md")]
    mod curvature {}
    #[doc = include_str!("../../../book/src/perturbation.md")]
    mod perturbation {}
    #[doc = include_str!("../../../book/src/learners.md")]
    mod learners {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
