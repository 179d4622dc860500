//! Benchmarks for qsep-core; see `benches/`.
