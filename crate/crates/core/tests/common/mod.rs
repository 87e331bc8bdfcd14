#![allow(dead_code)]

use coda_alpha::CompositionBatch;

pub struct Glass {
    pub ri: Vec<f64>,
    pub parts: CompositionBatch,
    pub types: Vec<String>,
}

/// Forensic glass fragments: refractive index, eight oxide percentages and
/// the glass type.
pub fn glass() -> Glass {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/glass.csv");
    let text =
        std::fs::read_to_string(path).expect("data/glass.csv is shipped with the repository");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        header,
        ["RI", "Na", "Mg", "Al", "Si", "K", "Ca", "Ba", "Fe", "type"]
    );
    let mut ri = Vec::new();
    let mut rows = Vec::new();
    let mut types = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        ri.push(fields[0].parse().unwrap());
        rows.push(fields[1..9].iter().map(|v| v.parse().unwrap()).collect());
        types.push(fields[9].trim().to_string());
    }
    let labels = header[1..9].iter().map(|s| s.to_string()).collect();
    Glass {
        ri,
        parts: CompositionBatch::from_rows(&rows, Some(labels)).unwrap(),
        types,
    }
}
