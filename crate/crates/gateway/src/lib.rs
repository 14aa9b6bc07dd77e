//! Command-line front end and live session service.

pub mod assets;
pub mod blind;
pub mod cli;
pub mod protocol;
pub mod server;
