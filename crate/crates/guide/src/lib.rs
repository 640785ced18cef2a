//! The book's chapters, compiled so that every listing runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}

#[doc = include_str!("../../../book/src/mapper.md")]
pub mod mapper {}

#[doc = include_str!("../../../book/src/failure-modes.md")]
pub mod failure_modes {}

#[doc = include_str!("../../../book/src/correction.md")]
pub mod correction {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
