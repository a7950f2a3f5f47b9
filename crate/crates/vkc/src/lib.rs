//! File formats, reports and the experiment harness for `vkc-core`.

pub mod format;
pub mod run;
pub mod trajectory;

pub use vkc_core as core;
