//! Criterion benchmarks for the contact workspace live in `benches/`.
