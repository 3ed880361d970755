pub mod analysis;
pub mod config;
pub mod eval;
pub mod expander;
pub mod index;
pub mod pipeline;
pub mod reader;
pub mod relsnip;
pub mod remote;
