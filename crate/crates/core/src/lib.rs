pub mod dataset;
pub mod features;
pub mod nn;
pub mod models;
pub mod evaluation;
pub mod experiment;
