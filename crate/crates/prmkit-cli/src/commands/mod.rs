pub mod eval;
pub mod label;
pub mod report;
