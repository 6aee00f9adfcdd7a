//! earco: engine for automated incident root-cause-analysis recommendations.
//!
//! The crate wires together five subsystems:
//!
//! - [`incident`] / [`clean`] / [`summarize`]: corpus ingestion, text
//!   cleaning, optional LLM summarization, and temporal splitting.
//! - [`embedding`] / [`index`]: text encoding and an exact flat L2
//!   nearest-neighbor index over historical incidents.
//! - [`gateway`]: uniform chat-completion access for every model role,
//!   with retries, caching, call accounting, and a scripted mock backend
//!   so the whole pipeline runs offline.
//! - [`optimizer`]: the discrete prompt-optimization loop
//!   (mutate → score → critique → synthesize), in-context example tuning,
//!   reasoning augmentation, validation, and intent/persona generation.
//! - [`assembly`] / [`inference`] / [`evaluation`]: per-strategy prompt
//!   assembly, root-cause generation, answer extraction, and an
//!   LLM-as-judge evaluation harness with mean ± std reporting.
//!
//! The `earco` binary exposes the workflows as subcommands; see the guide
//! under `book/` for a narrative walkthrough.

pub mod assembly;
pub mod clean;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod evaluation;
pub mod gateway;
pub mod incident;
pub mod index;
pub mod inference;
pub mod optimizer;
pub mod runtime;
pub mod summarize;
pub mod templates;

// The guide's code blocks double as doc-tests so the book cannot drift
// from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/ingestion.md")]
    mod ingestion {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/assembly.md")]
    mod assembly {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
