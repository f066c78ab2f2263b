//! Benchmarks for the siltlab kernels; see `benches/kernels.rs`.
