//! The chapters of the guide in `book/src`. Each one is attached to an empty
//! module so that `cargo test --doc` compiles and runs its code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/noise.md")]
pub mod noise {}

#[doc = include_str!("../../../book/src/generator.md")]
pub mod generator {}

#[doc = include_str!("../../../book/src/discriminator.md")]
pub mod discriminator {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/toy-results.md")]
pub mod toy_results {}
