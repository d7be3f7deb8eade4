//! Core engine for waymark.

pub mod buffer;
pub mod env;
pub mod model;
pub mod records;
pub mod oracle;
pub mod navigator;
pub mod reflector;
pub mod memory;
pub mod runtime;
pub mod api;
pub mod bench;
pub mod fixtures;
