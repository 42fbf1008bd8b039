//! DiSPA: drug-response regression coupling chemical substructures to
//! pathway-level gene expression through dual-view differential
//! cross-attention.
//!
//! The pipeline: SMILES strings are parsed ([`chem`]) and decomposed into
//! substructures ([`brics`]); expression profiles are z-scored and masked
//! into per-pathway rows ([`data`]); both sides are embedded ([`embed`]),
//! encoded into a shared latent space, and fused by two differential
//! cross-attention views ([`model`]) trained with Adam ([`train`]) on a
//! hand-rolled reverse-mode tape ([`autodiff`]). Interpretability
//! statistics live in [`stats`] and [`analysis`].

pub mod analysis;
pub mod autodiff;
pub mod brics;
pub mod chem;
pub mod cli;
pub mod data;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod model;
pub mod split;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

/// The guide's chapters, compiled as doc-tests so every snippet in the
/// book stays in sync with the library.
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/chemistry.md")]
    pub mod chemistry {}
    #[doc = include_str!("../../../book/src/pathways.md")]
    pub mod pathways {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub mod autodiff {}
    #[doc = include_str!("../../../book/src/attention.md")]
    pub mod attention {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/interpretability.md")]
    pub mod interpretability {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
