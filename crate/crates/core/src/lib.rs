pub mod backend;
pub mod corpus;
pub mod exec;
pub mod faithfulness;
pub mod linearize;
pub mod pmc;
pub mod prompting;
pub mod scoring;
pub mod synth;
pub mod tree;
pub mod validity;
