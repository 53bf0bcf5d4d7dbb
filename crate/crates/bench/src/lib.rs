//! Criterion benchmarks for the `unistoch` kernels; see `benches/`.
