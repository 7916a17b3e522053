//! Criterion benchmarks for the solver, network and clustering kernels; see `benches/`.
