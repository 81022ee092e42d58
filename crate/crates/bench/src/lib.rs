//! Criterion benchmarks for the feature and network pipeline; see `benches/`.
