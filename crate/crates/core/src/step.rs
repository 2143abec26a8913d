//! Finitely supported increment laws and the hypotheses on them.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cone::{ConeKind, ConeSpec, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::{dot, rank, row_matrix};
use crate::lp::{self, LpOutcome};

/// Guard on `|<z, s>|` before exponentiating.
pub const EXP_GUARD: f64 = 700.0;

pub type Lattice = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Weights sum to one.
    Probability,
    /// Every weight is one; used for counting walks.
    Counting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMeasure {
    dim: usize,
    steps: Vec<Vec<f64>>,
    weights: Vec<f64>,
    mode: Mode,
}

fn validate_steps(steps: &[Vec<f64>]) -> Result<usize> {
    let first = steps
        .first()
        .ok_or_else(|| Error::InvalidMeasure("empty step set".into()))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidMeasure(
            "steps must have dimension at least 1".into(),
        ));
    }
    for (i, s) in steps.iter().enumerate() {
        Error::check_dim(dim, s.len())?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("step {i} is not finite")));
        }
        if steps[..i].contains(s) {
            return Err(Error::InvalidMeasure(format!("duplicate step {s:?}")));
        }
    }
    Ok(dim)
}

impl StepMeasure {
    /// Uniform law on a step set.
    pub fn from_step_set(steps: Vec<Vec<f64>>) -> Result<Self> {
        let dim = validate_steps(&steps)?;
        let w = 1.0 / steps.len() as f64;
        Ok(StepMeasure {
            dim,
            weights: vec![w; steps.len()],
            steps,
            mode: Mode::Probability,
        })
    }

    pub fn from_lattice(steps: &[Lattice]) -> Result<Self> {
        Self::from_step_set(to_real(steps))
    }

    /// Probability law with explicit weights (must sum to one within 1e-12).
    pub fn with_weights(steps: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = validate_steps(&steps)?;
        if weights.len() != steps.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} steps",
                weights.len(),
                steps.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(
                "weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(StepMeasure {
            dim,
            steps,
            weights,
            mode: Mode::Probability,
        })
    }

    /// Unit weights on every step.
    pub fn counting(steps: Vec<Vec<f64>>) -> Result<Self> {
        let dim = validate_steps(&steps)?;
        Ok(StepMeasure {
            dim,
            weights: vec![1.0; steps.len()],
            steps,
            mode: Mode::Counting,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn require_probability(&self) -> Result<()> {
        match self.mode {
            Mode::Probability => Ok(()),
            Mode::Counting => Err(Error::CountingMode),
        }
    }

    pub fn is_lattice(&self) -> bool {
        self.steps
            .iter()
            .flatten()
            .all(|x| (x - x.round()).abs() < 1e-12 && x.abs() < 1e15)
    }

    pub fn lattice_steps(&self) -> Result<Vec<Lattice>> {
        if !self.is_lattice() {
            return Err(Error::NonLattice);
        }
        Ok(self
            .steps
            .iter()
            .map(|s| s.iter().map(|x| x.round() as i64).collect())
            .collect())
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        self.require_probability()?;
        let mut m = vec![0.0; self.dim];
        for (s, w) in self.steps.iter().zip(&self.weights) {
            for (mi, si) in m.iter_mut().zip(s) {
                *mi += w * si;
            }
        }
        Ok(m)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.mean()?;
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for (s, w) in self.steps.iter().zip(&self.weights) {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    c[(i, j)] += w * (s[i] - m[i]) * (s[j] - m[j]);
                }
            }
        }
        Ok(c)
    }

    /// The support is not contained in any linear hyperplane.
    pub fn check_h1(&self) -> bool {
        rank(&row_matrix(&self.steps, self.dim), RANK_TOL) == self.dim
    }

    /// Same property through the covariance: `Γ` nondegenerate, or
    /// `ker Γ` one-dimensional with the mean outside `(ker Γ)^⊥`.
    pub fn check_h1_via_covariance(&self) -> Result<bool> {
        let normalized;
        let measure = match self.mode {
            Mode::Probability => self,
            Mode::Counting => {
                normalized = StepMeasure::from_step_set(self.steps.clone())?;
                &normalized
            }
        };
        let cov = measure.covariance()?;
        let mean = measure.mean()?;
        let eig = SymmetricEigen::new(cov);
        let scale = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max)
            .max(dot(&mean, &mean));
        if scale == 0.0 {
            return Ok(false);
        }
        let kernel: Vec<usize> = (0..self.dim)
            .filter(|&i| eig.eigenvalues[i] <= RANK_TOL * scale)
            .collect();
        Ok(match kernel.len() {
            0 => true,
            1 => {
                let k = eig.eigenvectors.column(kernel[0]);
                let proj: f64 = (0..self.dim).map(|i| k[i] * mean[i]).sum();
                proj.abs() > RANK_TOL * scale.sqrt()
            }
            _ => false,
        })
    }

    /// Decides whether the support sits in a half-space `u^-` for some
    /// nonzero `u` of the dual of `cone`.
    pub fn check_h2prime(&self, cone: &ConeSpec) -> Result<H2Check> {
        Error::check_dim(self.dim, cone.dim())?;
        let witness = improper_direction(&self.steps, &cone.dual())?;
        Ok(H2Check {
            proper: witness.is_none(),
            witness,
        })
    }

    /// Cramér tilt `w_s e^{<z,s>} / L(z)`.
    pub fn tilt(&self, z: &[f64]) -> Result<StepMeasure> {
        self.require_probability()?;
        Error::check_dim(self.dim, z.len())?;
        if z.iter().all(|&x| x == 0.0) {
            return Ok(self.clone());
        }
        let exps: Vec<f64> = self.steps.iter().map(|s| dot(z, s)).collect();
        if let Some(&e) = exps.iter().find(|e| e.abs() > EXP_GUARD) {
            return Err(Error::Overflow { exponent: e });
        }
        let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = exps
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * (e - top).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(StepMeasure {
            dim: self.dim,
            steps: self.steps.clone(),
            weights: raw.iter().map(|r| r / total).collect(),
            mode: Mode::Probability,
        })
    }
}

pub(crate) fn to_real(steps: &[Lattice]) -> Vec<Vec<f64>> {
    steps
        .iter()
        .map(|s| s.iter().map(|&x| x as f64).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Check {
    pub proper: bool,
    /// Normalized to `sum |u_i| = 1`.
    pub witness: Option<Vec<f64>>,
}

/// Searches for `u` in `dual_cone \ {0}` with `<u, s> <= 0` for every step.
///
/// `dual_cone` must be an orthant or a generated cone. The cone is
/// parametrized by nonnegative coefficients `t` on its generators with
/// `sum t = 1`; feasibility is a phase-one LP. When feasible, the witness is
/// the average of the LP vertices maximizing each coefficient in turn, which
/// makes it independent of pivoting order for symmetric models.
pub fn improper_direction(steps: &[Vec<f64>], dual_cone: &ConeSpec) -> Result<Option<Vec<f64>>> {
    let dim = dual_cone.dim();
    let gens: Vec<Vec<f64>> = match dual_cone.kind() {
        ConeKind::Orthant => (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect(),
        ConeKind::Generated { rays } => rays.clone(),
        other => {
            return Err(Error::UnsupportedCone {
                op: "half-space witness search",
                kind: other.name(),
            })
        }
    };
    let k = gens.len();
    let ns = steps.len();
    // Variables: t (k), slack per step (ns).
    let mut a = Vec::with_capacity(ns + 1);
    let mut norm_row = vec![0.0; k + ns];
    for v in norm_row.iter_mut().take(k) {
        *v = 1.0;
    }
    a.push(norm_row);
    for (si, s) in steps.iter().enumerate() {
        let mut row = vec![0.0; k + ns];
        for (j, g) in gens.iter().enumerate() {
            row[j] = dot(g, s);
        }
        row[k + si] = 1.0;
        a.push(row);
    }
    let mut b = vec![0.0; ns + 1];
    b[0] = 1.0;

    let mut t_sum = vec![0.0; k];
    for j in 0..k {
        let mut c = vec![0.0; k + ns];
        c[j] = -1.0;
        match lp::minimize(&c, &a, &b, 1e-10) {
            LpOutcome::Optimal { x, .. } => {
                for i in 0..k {
                    t_sum[i] += x[i] / k as f64;
                }
            }
            LpOutcome::Infeasible { .. } => return Ok(None),
            LpOutcome::Unbounded => unreachable!("coefficients are bounded by sum t = 1"),
        }
    }
    let mut u = vec![0.0; dim];
    for (t, g) in t_sum.iter().zip(&gens) {
        for (ui, gi) in u.iter_mut().zip(g) {
            *ui += t * gi;
        }
    }
    let l1: f64 = u.iter().map(|x| x.abs()).sum();
    if l1 <= 1e-12 {
        // Generators summing to zero: the dual cone contains a line, and
        // any generator direction on it works as a witness.
        return Ok(Some(u));
    }
    Ok(Some(u.iter().map(|x| x / l1).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Check {
    pub ok: bool,
    /// Steps of a path from the origin that stays in the orthant and ends
    /// strictly inside it.
    pub path: Option<Vec<Lattice>>,
    pub depth: usize,
}

/// Default search depth `2 * dim * max |s|_1`.
pub fn default_h3_depth(steps: &[Lattice]) -> usize {
    let dim = steps.first().map_or(1, |s| s.len());
    let l1 = steps
        .iter()
        .map(|s| s.iter().map(|x| x.unsigned_abs()).sum::<u64>())
        .max()
        .unwrap_or(1);
    (2 * dim as u64 * l1.max(1)) as usize
}

/// Breadth-first search from the origin over orthant lattice points for a
/// path reaching the interior within `depth` steps. A negative answer only
/// means no such path exists up to that depth.
pub fn check_h3(steps: &[Lattice], depth: usize) -> Result<H3Check> {
    let dim = steps
        .first()
        .map(|s| s.len())
        .ok_or_else(|| Error::InvalidMeasure("empty step set".into()))?;
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "search depth must be at least 1".into(),
        ));
    }
    let origin = vec![0i64; dim];
    let found = bfs_path(
        steps,
        &origin,
        depth,
        |p| p.iter().all(|&x| x >= 0),
        |p| p.iter().all(|&x| x > 0),
    );
    Ok(H3Check {
        ok: found.is_some(),
        path: found,
        depth,
    })
}

/// Lattice BFS; returns the step sequence of the first path (in BFS order,
/// steps tried in input order) whose endpoint satisfies `goal`.
pub(crate) fn bfs_path(
    steps: &[Lattice],
    start: &[i64],
    depth: usize,
    admissible: impl Fn(&[i64]) -> bool,
    goal: impl Fn(&[i64]) -> bool,
) -> Option<Vec<Lattice>> {
    let mut parent: HashMap<Lattice, (Lattice, usize)> = HashMap::new();
    let mut queue = VecDeque::new();
    queue.push_back((start.to_vec(), 0usize));
    parent.insert(start.to_vec(), (start.to_vec(), usize::MAX));
    while let Some((p, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for (si, s) in steps.iter().enumerate() {
            let q: Lattice = p.iter().zip(s).map(|(a, b)| a + b).collect();
            if !admissible(&q) || parent.contains_key(&q) {
                continue;
            }
            parent.insert(q.clone(), (p.clone(), si));
            if goal(&q) {
                let mut path = Vec::new();
                let mut cur = q;
                while let Some((prev, si)) = parent.get(&cur) {
                    if *si == usize::MAX {
                        break;
                    }
                    path.push(steps[*si].clone());
                    cur = prev.clone();
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back((q, d + 1));
        }
    }
    None
}

/// Step-set file: `{"dim": d, "steps": [[..],..], "weights": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFile {
    pub dim: usize,
    pub steps: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl StepFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("step file: {e}")))
    }

    pub fn to_measure(&self) -> Result<StepMeasure> {
        for s in &self.steps {
            Error::check_dim(self.dim, s.len())?;
        }
        match &self.weights {
            None => StepMeasure::from_step_set(self.steps.clone()),
            Some(w) => StepMeasure::with_weights(self.steps.clone(), w.clone()),
        }
    }

    pub fn from_measure(m: &StepMeasure) -> Self {
        let uniform = m.weights.iter().all(|&w| w == m.weights[0]);
        StepFile {
            dim: m.dim,
            steps: m.steps.clone(),
            weights: if uniform {
                None
            } else {
                Some(m.weights.clone())
            },
        }
    }
}
