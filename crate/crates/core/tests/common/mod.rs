#![allow(dead_code)]

use std::path::PathBuf;

use cascade_core::grid::{parse_case, GridCase};

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"))
}

pub fn load(name: &str) -> GridCase {
    let text = std::fs::read_to_string(case_path(name)).expect("case file");
    parse_case(&text).expect("valid case")
}
