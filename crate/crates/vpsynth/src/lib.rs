//! File formats, experiment pipelines and the command line of the vpsynth
//! task synthesis engine.

pub mod checkpoint;
pub mod cli;
pub mod datadir;
pub mod io;
pub mod pipeline;
pub mod render;
pub mod tables;
