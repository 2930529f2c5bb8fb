//! The guide's chapters, compiled as doc-tests so their snippets stay in
//! sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}
#[doc = include_str!("../../../book/src/illuminants.md")]
pub mod illuminants {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/files.md")]
pub mod files {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
