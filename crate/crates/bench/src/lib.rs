//! Fixtures shared by the benchmarks.

use conewalk::{ConeSpec, Lattice, StepMeasure};

pub fn five_step() -> Vec<Lattice> {
    vec![
        vec![0, 1],
        vec![0, -1],
        vec![1, 0],
        vec![-1, 0],
        vec![-1, -1],
    ]
}

pub fn five_step_measure() -> StepMeasure {
    StepMeasure::from_lattice(&five_step()).unwrap()
}

pub fn spatial() -> Vec<Lattice> {
    vec![
        vec![1, 0, 0],
        vec![-1, 0, 0],
        vec![0, 1, 0],
        vec![0, -1, 0],
        vec![0, 0, 1],
        vec![0, 0, -1],
        vec![-1, -1, -1],
    ]
}

pub fn quadrant() -> ConeSpec {
    ConeSpec::orthant(2).unwrap()
}
