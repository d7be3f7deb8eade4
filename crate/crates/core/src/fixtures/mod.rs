//! Deterministic fixture generators shared by tests, benchmarks and the
//! files under `fixtures/`.

pub mod bench;
pub mod cms;
pub mod graphs;
pub mod suite;
