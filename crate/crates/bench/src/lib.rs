//! Benchmarks for the manet-qos simulator live under `benches/`.
