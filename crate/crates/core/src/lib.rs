pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod error;
pub mod estimators;
pub mod events;
pub mod graphs;
pub mod nn;
pub mod proposal;
pub mod scm;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/scm.md")]
    pub mod scm {}
    #[doc = include_str!("../../../book/src/events.md")]
    pub mod events {}
    #[doc = include_str!("../../../book/src/boundaries.md")]
    pub mod boundaries {}
    #[doc = include_str!("../../../book/src/proposals.md")]
    pub mod proposals {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    pub mod estimators {}
    #[doc = include_str!("../../../book/src/queries.md")]
    pub mod queries {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
