// Benchmark-only crate; see benches/core_benches.rs.
