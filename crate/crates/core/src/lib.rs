pub mod correction;
pub mod dataset;
pub mod error;
pub mod failure;
pub mod filters;
pub mod mapper;
pub mod pipeline;
pub mod unionfind;

pub use error::{Error, Result};
pub use unionfind::UnionFind;
