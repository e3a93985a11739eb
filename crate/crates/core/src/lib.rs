pub mod config;
pub mod eigenbasis;
pub mod error;
pub mod io;
pub mod spectral_ops;
pub mod sqg;
pub mod timestepping;
pub mod verification;
