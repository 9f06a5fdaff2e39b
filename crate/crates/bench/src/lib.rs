//! Criterion benchmarks for dlrc-core; see `benches/`.
