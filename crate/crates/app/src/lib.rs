//! Command-line tools and a JSON service around the scroll engine.

pub mod bench;
pub mod config;
pub mod gen;
pub mod server;
pub mod verify;
pub mod wire;

pub use config::AppConfig;
