//! Benchmarks for `tiltgait`; see `benches/`. Run with `cargo bench -p tiltgait-bench`.
