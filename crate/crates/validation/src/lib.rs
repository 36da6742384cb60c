//! Holds the `acceptance` harness in `tests/`; there is no library code.
