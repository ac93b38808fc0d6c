//! Acceptance suite for `mbl`; see `tests/acceptance.rs`.
