//! Generated small-step models for property checks: all step sets drawn
//! from the 8 neighbours of the origin in the plane, and seeded random
//! subsets of the 26 neighbours in space.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::Result;
use crate::step::{Lattice, StepMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusModel {
    pub name: String,
    pub measure: StepMeasure,
    pub h1: bool,
    pub proper: bool,
    pub witness: Option<Vec<f64>>,
}

/// Nonzero points of `{-1, 0, 1}^dim`, in lexicographic order.
pub fn small_steps(dim: usize) -> Vec<Lattice> {
    let mut out = Vec::new();
    let total = 3usize.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let mut s = vec![0i64; dim];
        for k in (0..dim).rev() {
            s[k] = (c % 3) as i64 - 1;
            c /= 3;
        }
        if s.iter().any(|&x| x != 0) {
            out.push(s);
        }
    }
    out
}

/// H1 and H2' with respect to the orthant.
pub fn classify(name: String, measure: StepMeasure) -> Result<CorpusModel> {
    let cone = ConeSpec::orthant(measure.dim())?;
    let h1 = measure.check_h1();
    let h2 = measure.check_h2prime(&cone)?;
    Ok(CorpusModel {
        name,
        measure,
        h1,
        proper: h1 && h2.proper,
        witness: h2.witness,
    })
}

fn label(steps: &[Lattice]) -> String {
    let parts: Vec<String> = steps
        .iter()
        .map(|s| {
            s.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    format!("{{({})}}", parts.join(")("))
}

/// All 255 nonempty subsets of the planar small steps with uniform weights.
pub fn planar_small_step_models() -> Result<Vec<CorpusModel>> {
    let base = small_steps(2);
    (1u32..(1 << base.len()))
        .map(|mask| {
            let steps: Vec<Lattice> = (0..base.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| base[i].clone())
                .collect();
            classify(label(&steps), StepMeasure::from_lattice(&steps)?)
        })
        .collect()
}

/// `count` seeded random subsets of the spatial small steps that satisfy
/// `accept`, each with 4 to 9 steps and uniform weights.
pub fn spatial_models(
    seed: u64,
    count: usize,
    accept: impl Fn(&CorpusModel) -> bool,
) -> Result<Vec<CorpusModel>> {
    let base = small_steps(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<CorpusModel> = Vec::new();
    let mut attempts = 0usize;
    while out.len() < count && attempts < 100_000 {
        attempts += 1;
        let k = rng.random_range(4..=9);
        let mut idx = sample(&mut rng, base.len(), k).into_vec();
        idx.sort_unstable();
        let steps: Vec<Lattice> = idx.iter().map(|&i| base[i].clone()).collect();
        let name = label(&steps);
        if out.iter().any(|m| m.name == name) {
            continue;
        }
        let model = classify(name, StepMeasure::from_lattice(&steps)?)?;
        if accept(&model) {
            out.push(model);
        }
    }
    Ok(out)
}

/// Same support as `m` with seeded random positive weights.
pub fn reweighted(m: &StepMeasure, seed: u64) -> Result<StepMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..m.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Put the rounding residue on the largest weight so the sum is 1.
    let residue = 1.0 - w.iter().sum::<f64>();
    let top = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
    w[top] += residue;
    StepMeasure::with_weights(m.steps().to_vec(), w)
}
