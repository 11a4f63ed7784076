//! Abstract syntax, text-format parser and canonical printer.

mod ast;
mod parser;
mod printer;

pub use ast::*;
pub use parser::{parse_i32_literal, parse_module, ParseError};
pub use printer::{print_instr, print_module};

