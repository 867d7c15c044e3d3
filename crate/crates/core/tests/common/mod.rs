#![allow(dead_code)]

use soliton_lab::models::{build_model, EuclideanPhi, ManifoldModel, ModelSpec};

pub fn flat(n: usize, value: f64) -> ManifoldModel {
    build_model(&ModelSpec::Euclidean {
        n,
        phi: EuclideanPhi::Constant { value },
    })
    .unwrap()
}

pub fn hyperbolic(n: usize) -> ManifoldModel {
    build_model(&ModelSpec::Euclidean {
        n,
        phi: EuclideanPhi::HalfOnePlusNormSq,
    })
    .unwrap()
}

pub fn cigar() -> ManifoldModel {
    build_model(&ModelSpec::Cigar).unwrap()
}

pub fn cigar_product(k: usize) -> ManifoldModel {
    build_model(&ModelSpec::CigarProduct { k }).unwrap()
}

pub fn bryant(n: usize) -> ManifoldModel {
    let spec: ModelSpec = serde_json::from_str(&format!(r#"{{"kind": "bryant", "n": {n}}}"#)).unwrap();
    build_model(&spec).unwrap()
}

/// Chart point at distance `d` from the cigar tip along `e₁`.
pub fn cigar_radial(d: f64) -> Vec<f64> {
    vec![(0.5 * d).sinh(), 0.0]
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
