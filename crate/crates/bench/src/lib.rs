//! Benchmarks for the biphoton pipeline live in `benches/`.
