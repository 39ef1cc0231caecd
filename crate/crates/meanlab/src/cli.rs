//! Placeholder; full CLI lands after the core modules compile.
pub mod suite {}
