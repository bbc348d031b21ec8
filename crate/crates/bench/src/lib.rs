//! Criterion benchmarks for the adabo core crate live under `benches/`.
