//! Library surface of the CLI crate: the file-format loaders, shared with
//! the integration tests.

pub mod files;
