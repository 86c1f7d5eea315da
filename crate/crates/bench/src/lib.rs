//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use cascade_core::grid::{parse_case, GridCase};

pub fn load_case(name: &str) -> GridCase {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../cases/{name}.m"));
    parse_case(&std::fs::read_to_string(path).expect("case file")).expect("valid case")
}
