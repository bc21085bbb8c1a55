//! Criterion benchmarks for `purcell-core`. See `benches/pipelines.rs`.
