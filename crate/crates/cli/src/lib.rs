//! Schema DSL, file formats and the `answerability` command line.

pub mod commands;
pub mod diagnostics;
pub mod lexer;
pub mod parser;
pub mod printer;
