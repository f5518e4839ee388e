//! Criterion benchmarks for the solvers and estimators; see `benches/`.
