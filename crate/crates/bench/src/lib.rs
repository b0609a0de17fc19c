pub mod artifacts;
pub mod checkpoint;
pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;
