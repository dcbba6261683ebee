//! Compiles every listing in `book/` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/ranking.md")]
pub mod ranking {}
#[doc = include_str!("../../../book/src/annotators.md")]
pub mod annotators {}
#[doc = include_str!("../../../book/src/policy.md")]
pub mod policy {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/alignment.md")]
pub mod alignment {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
