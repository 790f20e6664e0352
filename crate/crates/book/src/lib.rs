//! Compiles the code blocks of the guide in `book/src` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/space.md")]
pub mod space {}
#[doc = include_str!("../../../book/src/estimators.md")]
pub mod estimators {}
#[doc = include_str!("../../../book/src/dimension_test.md")]
pub mod dimension_test {}
#[doc = include_str!("../../../book/src/power.md")]
pub mod power {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/kronecker.md")]
pub mod kronecker {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
