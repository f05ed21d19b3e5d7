pub mod cli;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod forge;
pub mod matcher;
pub mod model;
pub mod objective;
pub mod plot;
pub mod ranking;
pub mod span;
pub mod synth;
pub mod tagger;
pub mod train;
pub mod util;
