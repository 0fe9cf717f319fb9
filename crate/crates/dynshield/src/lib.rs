//! Dynamic shielding for safe reinforcement learning.
//!
//! The pipeline: execution traces feed a passive Mealy-machine learner (an
//! RPNI variant with an evidence-depth merge gate); the learned model is
//! composed with a safety automaton into a two-player safety game with an
//! optimistic sink; the winning region of that game yields a preemptive
//! shield that masks controller actions; a tabular Q-learning agent trains
//! under the shield, which is rebuilt from the growing trace store as
//! training proceeds.

pub mod abstraction;
pub mod alphabet;
pub mod config;
pub mod dot;
pub mod dynamic;
pub mod envs;
pub mod format;
pub mod fsrs;
pub mod game;
pub mod gen;
pub mod learn;
pub mod mealy;
pub mod report;
pub mod rl;
pub mod safety;

pub use abstraction::abstracts;
pub use alphabet::{Alphabet, Sym};
pub use fsrs::{induce_mdp, EnvStrategy, Fsrs, Mdp};
pub use mealy::{IoWord, MealyBuilder, MealyMachine, StateId, Word};
pub use safety::{SafetyAutomaton, SafetyBuilder, SpecState};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown symbol '{0}'")]
    UnknownSymbol(String),
    #[error("unknown state '{0}'")]
    UnknownState(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
