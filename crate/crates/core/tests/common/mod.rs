#![allow(dead_code)]

use std::path::PathBuf;

use theta_core::linalg::Rational;
use theta_core::model::Identity;
use theta_core::parser::{parse_identity, parse_shifts};

/// Identities that the exact pipeline proves.
pub const GOLDEN: [&str; 8] = [
    "ideab",
    "bailey",
    "exriemann",
    "chu",
    "weierstrass",
    "idenwxyz",
    "idenwxyz3",
    "didenabc",
];

pub fn data_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(file)
}

pub fn read(file: &str) -> String {
    std::fs::read_to_string(data_path(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn identity(name: &str) -> Identity {
    parse_identity(&read(&format!("{name}.theta"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn shifts(name: &str) -> Option<Vec<Vec<Rational>>> {
    let path = data_path(&format!("{name}.shifts"));
    path.exists()
        .then(|| parse_shifts(&std::fs::read_to_string(path).unwrap()).unwrap())
}
