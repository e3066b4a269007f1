//! Density-space navigation for control-affine systems: fit transfer
//! generators from snapshots, solve a traversability-weighted linear
//! program for an occupation density, and recover a feedback law from it.
//!
//! The guide in `book/` walks through each stage.

pub mod basis;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod navprog;
pub mod operators;
pub mod scenario;
pub mod terrain;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/basis.md")]
    mod basis {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/terrain.md")]
    mod terrain {}
    #[doc = include_str!("../../../book/src/program.md")]
    mod program {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/balance.md")]
    mod balance {}
}
