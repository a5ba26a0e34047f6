//! Tolerant front end for decompiled pseudo-C.

mod ast;
mod lexer;
mod parser;

pub use ast::{node_depths, AstNode, FuzzyAst, NodeType};
pub use lexer::{is_keyword, keywords, lex_pseudo_c, LexToken, TokenKind};
pub use parser::{parse_pseudo_c, parse_str};
