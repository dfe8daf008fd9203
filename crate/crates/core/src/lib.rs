pub mod brightctl;
pub mod cli;
pub mod colorloop;
pub mod dataset;
pub mod diffusiontoy;
pub mod imagecore;
pub mod metrics;
pub mod promptparse;
pub mod relight;
pub mod retinex;
pub mod reward;
pub mod toolset;
