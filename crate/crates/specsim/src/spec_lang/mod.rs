//! Spec language: parsing, normalization, and decomposition of finite-trace
//! temporal-logic specifications whose atomic propositions are relational
//! set expressions over scene graphs.

pub mod ast;
pub mod configurations;
pub mod normalize;
pub mod parser;

pub use ast::{CardCmp, Comparator, Formula, SetExpr, Spec};
pub use configurations::{
    enumerate_configurations, enumerate_oneflips, ApLiteral, Configuration, ConfigurationSpace,
    Fragment, FragmentKind, OneFlip,
};
pub use normalize::{decompose_pre_post, normalize, split_disjunctions};
pub use parser::{parse_spec, ParseError};
