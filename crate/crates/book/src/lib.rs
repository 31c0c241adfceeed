//! The chapters of the guide in `book/src`, included as documentation so that
//! `cargo test` compiles and runs every Rust sample in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/images.md")]
pub mod images {}

#[doc = include_str!("../../../book/src/noise-estimation.md")]
pub mod noise_estimation {}

#[doc = include_str!("../../../book/src/flow-matching.md")]
pub mod flow_matching {}

#[doc = include_str!("../../../book/src/schedules.md")]
pub mod schedules {}

#[doc = include_str!("../../../book/src/inference.md")]
pub mod inference {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
