//! Build Deliberative Reason Index (DRI) survey instruments from a news
//! corpus and score completed surveys.
//!
//! The pipeline runs in stages that talk to each other through files:
//! [`corpus`] ingests and chunks articles, [`embedding`] turns paragraphs
//! into vectors, [`categorization`] scores them against anchor texts and
//! picks the top paragraphs per category and leaning, [`generation`] asks a
//! chat model for statements, [`dri`] scores survey responses and
//! [`validation`] compares generated statements with a reference survey.
//! [`pipeline`] wires the stages together behind a run configuration.

pub mod categorization;
pub mod corpus;
pub mod dri;
pub mod embedding;
pub mod error;
pub mod generation;
pub mod hashing;
pub mod io;
pub mod pipeline;
pub mod validation;

pub use error::{Error, Result};
