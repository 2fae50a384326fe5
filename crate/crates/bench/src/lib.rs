//! Criterion benchmarks for mmddro live under `benches/`.
