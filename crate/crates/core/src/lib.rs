pub mod align;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod fixtures;
pub mod generate;
pub mod lm;
pub mod nn;
pub mod parallel;
pub mod seq2seq;
pub mod tensor;
