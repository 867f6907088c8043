//! Acceptance criteria live in `tests/acceptance.rs`; run them with
//! `cargo test -p selfsim-validation --test acceptance`.
