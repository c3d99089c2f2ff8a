//! HTTP service and command-line plumbing around `urbanlens_core`.

pub mod analysis;
pub mod server;
