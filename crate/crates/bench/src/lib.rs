//! Host crate for the Criterion benchmark targets in `benches/`.
//! There is no library code; run `cargo bench -p dift-bench`.
