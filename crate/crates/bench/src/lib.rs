//! Benchmark-only crate; see `benches/certification.rs`.
