//! Tropical period integrals and Gamma classes for Batyrev mirror pairs.

pub mod exact;
pub mod lattice_polytope;
pub mod constants;
pub mod zeta_series;
pub mod quadrature;
pub mod local_integrals;
pub mod period_engine;
