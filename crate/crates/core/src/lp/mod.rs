//! Parsing, grounding and stable-model search for the rule fragment used
//! by the planner.

pub mod ground;
pub mod parse;
pub mod program;
pub mod solve;
pub mod stable;
pub mod syntax;
pub mod term;

pub use ground::{ground_part, saturate, GroundError, Layer, Universe, DEFAULT_DEPTH_CAP};
pub use parse::{parse_atom, parse_program, parse_term, ParseError, Pos};
pub use program::{AtomId, AtomTable, GroundElement, GroundHead, GroundProgram, GroundRule};
pub use solve::{solve, AnswerSet, Models};
pub use stable::{is_stable, least_model, reduct, DefiniteProgram, DefiniteRule};
pub use syntax::{
    Choice, ChoiceElement, CmpOp, Head, Literal, PartKind, ProgramPart, ReactiveProgram, Rule,
};
pub use term::{Atom, Binding, Term};
