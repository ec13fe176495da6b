pub mod acceptance;
pub mod cli;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod graph;
pub mod hilbert;
pub mod lemmas;
pub mod operators;
pub mod output;
pub mod scenarios;
pub mod seeds;
pub mod verify;

pub use error::{Error, Result};

// every rust block in the guide runs under `cargo test --doc`; one module
// per chapter so a failure points at the right file
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/iterations.md")]
    mod iterations {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
