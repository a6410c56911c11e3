//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod ctc;
pub mod kn;
pub mod pipeline;
