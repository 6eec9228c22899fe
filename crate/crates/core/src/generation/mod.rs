//! Statement generation: prompt construction per category, leaning and
//! role, chat-completion calls with structured-output validation, near
//! duplicate grouping and the human review round-trip.

mod client;
mod dedup;
mod generate;
mod prompt;
mod review;

pub use client::{
    ChatClient, ChatMessage, HttpChatClient, MockGenerator, ScriptedChatClient, TransportError,
};
pub use dedup::{dedup_by_vectors, dedup_statements, DedupOutcome, DuplicateGroup, DEFAULT_DEDUP_THRESHOLD};
pub use generate::{
    generate, parse_statements, run_matrix, CellFailure, CellId, GenerationOptions, MatrixConfig,
    MatrixOutput, MatrixReport, PolicyScope,
};
pub use prompt::{
    build_prompt, render_template, role_explanation, select_exemplars, Exemplar, ExemplarBank,
    PromptRecord, PromptSpec, PromptTemplates,
};
pub use review::{
    review_export, review_import, Decision, FinalInstrument, InstrumentItem, ReviewRow, ReviewSheet,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Leaning;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[serde(alias = "considerations")]
    Consideration,
    #[serde(alias = "policies")]
    Policy,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Consideration => "consideration",
            Role::Policy => "policy",
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            Role::Consideration => "c",
            Role::Policy => "p",
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "consideration" | "considerations" => Ok(Role::Consideration),
            "policy" | "policies" => Ok(Role::Policy),
            other => Err(Error::InvalidInput(format!("unknown role `{other}`"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedStatement {
    pub id: String,
    pub role: Role,
    pub text: String,
    pub category: String,
    pub leaning: Leaning,
    pub run_id: String,
    pub prompt_hash: String,
}
