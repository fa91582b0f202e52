//! Compiles and runs the code blocks of the guide as doc-tests.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/signals.md")]
pub mod signals {}
#[doc = include_str!("src/labels.md")]
pub mod labels {}
#[doc = include_str!("src/model.md")]
pub mod model {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/postprocessing.md")]
pub mod postprocessing {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/long-records.md")]
pub mod long_records {}
#[doc = include_str!("src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
