//! Compiles and runs the guide's code samples as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/metrics.md")]
mod metrics {}

#[doc = include_str!("../../../book/src/language-models.md")]
mod language_models {}

#[doc = include_str!("../../../book/src/decoding.md")]
mod decoding {}

#[doc = include_str!("../../../book/src/rescoring.md")]
mod rescoring {}

#[doc = include_str!("../../../book/src/scorer-protocol.md")]
mod scorer_protocol {}

#[doc = include_str!("../../../book/src/tasks.md")]
mod tasks {}

#[doc = include_str!("../../../book/src/tuning.md")]
mod tuning {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
