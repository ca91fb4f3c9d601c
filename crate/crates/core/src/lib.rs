//! Tooling for language-model generated VGDL games: prompt assembly, provider
//! access, extraction and validation of responses, a grid engine with a
//! winnability solver, and a trial harness that tabulates the results.

pub mod ast;
pub mod corpus;
pub mod engine;
pub mod extract;
pub mod harness;
pub mod lexer;
pub mod llm;
pub mod parser;
pub mod pretty;
pub mod prompt;
pub mod validator;

pub use ast::{GameSpec, LevelGrid};
pub use engine::{Action, Engine, EngineError, GameState, Solution, Status};
pub use extract::{extract_candidates, Candidate};
pub use parser::{parse_game, parse_level, ParseCategory, ParseError, ParseOptions};
pub use pretty::pretty_print;
pub use prompt::{build, preset, PresetId, PromptConfig, PromptText};
pub use validator::{validate, ErrorCode, Outcome, ValidationReport};
