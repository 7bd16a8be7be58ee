//! Robust output regulation for finite-dimensional linear systems.
pub mod error;
pub mod heat2d;
pub mod internal_model;
pub mod io;
pub mod minimal;
pub mod numerics;
pub mod observer;
pub mod sim;
pub mod stabilize;
pub mod sysmodel;
pub mod triangular;
pub use error::{Error, ErrorKind, Result};
