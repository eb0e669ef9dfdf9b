//! Criterion benchmark host crate; see benches/.
