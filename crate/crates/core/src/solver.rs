//! Minimization of the Laplace transform over the dual cone.
//!
//! The dual cone is parametrized by nonnegative coefficients on its
//! generators, `x = sum_i t_i r_i` with `t >= 0` (the identity basis for the
//! orthant). Multi-ray duals are handled by a projected Newton method on `t`
//! (Bertsekas-style active set, Armijo backtracking along the projection
//! arc); single-ray duals by a safeguarded one-dimensional Newton iteration.
//! The result carries a KKT certificate: at the minimizer `x*`, the gradient
//! lies in `K` and is orthogonal to `x*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::{ConeKind, ConeSpec};
use crate::error::{Error, Result};
use crate::laplace::LaplaceModel;
use crate::linalg::{dot, norm, regularized_solve};
use crate::step::{check_h3, default_h3_depth, improper_direction, Lattice, StepMeasure};

pub const ARMIJO_SHRINK: f64 = 0.5;
pub const ARMIJO_SLOPE: f64 = 1e-4;
/// Coefficients at or below this after projection count as active.
pub const ACTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop when the projected gradient is at most `tol * L(x)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting coefficients on the dual-cone generators (nonnegative).
    pub start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    pub h1: bool,
    pub h2prime: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h3: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub x_star: Vec<f64>,
    pub rho: f64,
    pub grad: Vec<f64>,
    /// Violation of `grad ∈ K`, measured as the largest normalized negative
    /// constraint value of `K = (K*)*`.
    pub kkt_membership_residual: f64,
    /// `<grad, x*>`.
    pub kkt_orthogonality: f64,
    /// Generator indices whose coefficient is zero at the optimum.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub hypothesis_flags: HypothesisFlags,
    /// Objective value per iteration.
    pub trace: Vec<f64>,
}

impl RateCertificate {
    /// `|<grad, x*>| / (1 + |grad| |x*|)`.
    pub fn scaled_orthogonality(&self) -> f64 {
        self.kkt_orthogonality.abs() / (1.0 + norm(&self.grad) * norm(&self.x_star))
    }
}

fn generators(cone: &ConeSpec) -> Result<Vec<Vec<f64>>> {
    let dual = cone.dual();
    let d = cone.dim();
    match dual.kind() {
        ConeKind::Orthant => Ok((0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect()),
        ConeKind::Generated { rays } => Ok(rays.clone()),
        _ => Err(Error::UnsupportedCone {
            op: "rate minimization",
            kind: cone.kind().name(),
        }),
    }
}

fn combine(basis: &[Vec<f64>], t: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (ti, r) in t.iter().zip(basis) {
        for (xi, ri) in x.iter_mut().zip(r) {
            *xi += ti * ri;
        }
    }
    x
}

fn project_nonneg(t: &[f64]) -> Vec<f64> {
    t.iter().map(|&v| v.max(0.0)).collect()
}

fn projected_gradient(t: &[f64], g: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(g)
        .map(|(&ti, &gi)| if ti > 0.0 { gi } else { gi.min(0.0) })
        .collect()
}

struct Objective<'a> {
    model: &'a LaplaceModel,
    basis: &'a [Vec<f64>],
    dim: usize,
}

impl Objective<'_> {
    fn x(&self, t: &[f64]) -> Vec<f64> {
        combine(self.basis, t, self.dim)
    }

    fn value(&self, t: &[f64]) -> Result<f64> {
        self.model.value(&self.x(t))
    }

    /// Value or +∞ when the overflow guard trips.
    fn value_or_inf(&self, t: &[f64]) -> f64 {
        self.value(t).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, t: &[f64]) -> Result<Vec<f64>> {
        let gx = self.model.gradient(&self.x(t))?;
        Ok(self.basis.iter().map(|r| dot(r, &gx)).collect())
    }

    fn hessian(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        let hx = self.model.hessian(&self.x(t))?;
        let k = self.basis.len();
        let r = DMatrix::from_fn(k, self.dim, |i, j| self.basis[i][j]);
        Ok(&r * hx * r.transpose())
    }
}

fn armijo_ok(f_new: f64, f: f64, slope: f64) -> bool {
    // Relative roundoff slack so that steps taken at the precision limit of
    // `f` are not rejected.
    f_new.is_finite() && f_new <= f + ARMIJO_SLOPE * slope + 4.0 * f64::EPSILON * f.abs()
}

/// Projected Newton on `t >= 0`. Returns `(t, iterations, trace)`.
fn projected_newton(
    obj: &Objective<'_>,
    t0: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let k = obj.basis.len();
    let mut t = t0;
    let mut trace = Vec::new();
    let mut last_pg = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let f = obj.value(&t)?;
        let g = obj.gradient(&t)?;
        trace.push(f);
        let pg = norm(&projected_gradient(&t, &g));
        last_pg = pg;
        if pg <= opts.tol * f {
            return Ok((t, iter, trace));
        }

        let stepped: Vec<f64> = t.iter().zip(&g).map(|(ti, gi)| ti - gi).collect();
        let eps = norm(&crate::linalg::sub(&t, &project_nonneg(&stepped))).min(1e-3);
        let active: Vec<bool> = (0..k).map(|i| t[i] <= eps && g[i] > 0.0).collect();
        let free: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();

        let h = obj.hessian(&t)?;
        let mut dir = vec![0.0; k];
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
            let sol = regularized_solve(&hff, &gf).ok_or(Error::NoConvergence {
                iterations: iter,
                projected_gradient: pg,
                trace: trace.clone(),
            })?;
            for (a, &i) in free.iter().enumerate() {
                dir[i] = sol[a];
            }
        }
        for i in 0..k {
            if active[i] {
                dir[i] = -g[i] / h[(i, i)].max(f64::MIN_POSITIVE);
            }
        }

        let mut accepted = line_search(obj, &t, &g, &dir, f);
        if accepted.is_none() {
            // Fall back to a scaled projected-gradient step.
            let scale = h.trace().max(f64::MIN_POSITIVE);
            let gd: Vec<f64> = g.iter().map(|gi| -gi / scale).collect();
            accepted = line_search(obj, &t, &g, &gd, f);
        }
        match accepted {
            Some(next) => t = next,
            None => {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    projected_gradient: pg,
                    trace,
                })
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        projected_gradient: last_pg,
        trace,
    })
}

fn line_search(obj: &Objective<'_>, t: &[f64], g: &[f64], dir: &[f64], f: f64) -> Option<Vec<f64>> {
    let mut alpha = 1.0;
    while alpha > 1e-20 {
        let cand: Vec<f64> = project_nonneg(
            &t.iter()
                .zip(dir)
                .map(|(ti, di)| ti + alpha * di)
                .collect::<Vec<_>>(),
        );
        let delta: Vec<f64> = cand.iter().zip(t).map(|(c, ti)| c - ti).collect();
        if delta.iter().all(|&d| d == 0.0) {
            return None;
        }
        let slope = dot(g, &delta);
        if slope < 0.0 && armijo_ok(obj.value_or_inf(&cand), f, slope) {
            return Some(cand);
        }
        alpha *= ARMIJO_SHRINK;
    }
    None
}

/// Minimizes `t -> L(t u)` on `t >= 0` by Newton steps safeguarded with
/// bisection on the sign of the derivative. Returns `(t, iterations, trace)`.
pub fn ray_minimize(
    model: &LaplaceModel,
    u: &[f64],
    opts: &SolverOptions,
) -> Result<(f64, usize, Vec<f64>)> {
    Error::check_dim(model.dim(), u.len())?;
    let at = |t: f64| -> Vec<f64> { u.iter().map(|ui| t * ui).collect() };
    let phi = |t: f64| model.value(&at(t));
    let dphi = |t: f64| -> Result<f64> { Ok(dot(&model.gradient(&at(t))?, u)) };
    let ddphi = |t: f64| -> Result<f64> {
        let h = model.hessian(&at(t))?;
        let v = DVector::from_column_slice(u);
        Ok((v.transpose() * h * &v)[(0, 0)])
    };

    let mut trace = vec![phi(0.0)?];
    if dphi(0.0)? >= 0.0 {
        return Ok((0.0, 0, trace));
    }
    let mut lo = 0.0;
    let mut hi = opts
        .start
        .as_ref()
        .and_then(|s| s.first().copied())
        .filter(|&s| s > 0.0)
        .unwrap_or(1.0);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                projected_gradient: f64::NAN,
                trace,
            });
        }
        // An overflow here means L keeps decreasing along u beyond the guard.
        if dphi(hi)? >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }

    let mut t = 0.5 * (lo + hi);
    loop {
        iterations += 1;
        let f = phi(t)?;
        let d = dphi(t)?;
        trace.push(f);
        if d.abs() <= opts.tol * f * norm(u) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok((t, iterations, trace));
        }
        if iterations > opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                projected_gradient: d.abs(),
                trace,
            });
        }
        if d < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dd = ddphi(t)?;
        let newton = t - d / dd;
        t = if dd > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
}

fn hypothesis_flags(model: &LaplaceModel, cone: &ConeSpec) -> Result<HypothesisFlags> {
    match model {
        LaplaceModel::Gaussian { .. } => Ok(HypothesisFlags {
            h1: true,
            h2prime: true,
            h3: None,
        }),
        LaplaceModel::Finite { measure } => {
            if !measure.check_h1() {
                return Err(Error::H1Violated);
            }
            if let Some(witness) = improper_direction(measure.steps(), &cone.dual())? {
                return Err(Error::Improper { witness });
            }
            let h3 = if cone.is_orthant() {
                measure
                    .lattice_steps()
                    .ok()
                    .and_then(|steps| check_h3(&steps, default_h3_depth(&steps)).ok())
                    .map(|r| r.ok)
            } else {
                None
            };
            Ok(HypothesisFlags {
                h1: true,
                h2prime: true,
                h3,
            })
        }
    }
}

/// Minimizes the Laplace transform over the dual of `cone` and certifies the
/// minimizer.
pub fn minimize_on_dual(
    model: &LaplaceModel,
    cone: &ConeSpec,
    opts: &SolverOptions,
) -> Result<RateCertificate> {
    Error::check_dim(model.dim(), cone.dim())?;
    let basis = generators(cone)?;
    let flags = hypothesis_flags(model, cone)?;
    let dim = cone.dim();
    let obj = Objective {
        model,
        basis: &basis,
        dim,
    };

    let (t, iterations, trace) = if basis.len() == 1 {
        let (s, it, tr) = ray_minimize(model, &basis[0], opts)?;
        (vec![s], it, tr)
    } else {
        let t0 = match &opts.start {
            Some(s) => {
                Error::check_dim(basis.len(), s.len())?;
                if s.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "start coefficients must be nonnegative".into(),
                    ));
                }
                s.clone()
            }
            None => newton_start(&obj)?,
        };
        projected_newton(&obj, t0, opts)?
    };

    certify(model, cone, &basis, &t, iterations, trace, flags)
}

/// The nonnegative clamp of the unconstrained Newton step from the apex,
/// or the apex itself when that does not decrease `L`.
fn newton_start(obj: &Objective<'_>) -> Result<Vec<f64>> {
    let k = obj.basis.len();
    let zero = vec![0.0; k];
    let f0 = obj.value(&zero)?;
    let g = obj.gradient(&zero)?;
    let h = obj.hessian(&zero)?;
    let rhs = DVector::from_iterator(k, g.iter().map(|v| -v));
    if let Some(step) = regularized_solve(&h, &rhs) {
        let cand = project_nonneg(step.as_slice());
        if obj.value_or_inf(&cand) < f0 {
            return Ok(cand);
        }
    }
    Ok(zero)
}

fn certify(
    model: &LaplaceModel,
    cone: &ConeSpec,
    basis: &[Vec<f64>],
    t: &[f64],
    iterations: usize,
    trace: Vec<f64>,
    flags: HypothesisFlags,
) -> Result<RateCertificate> {
    let x_star = combine(basis, t, cone.dim());
    let rho = model.value(&x_star)?;
    let grad = model.gradient(&x_star)?;
    let kkt_membership_residual = cone.dual().dual().violation(&grad)?;
    let kkt_orthogonality = dot(&grad, &x_star);
    let active_set = t
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= ACTIVE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(RateCertificate {
        x_star,
        rho,
        grad,
        kkt_membership_residual,
        kkt_orthogonality,
        active_set,
        iterations,
        hypothesis_flags: flags,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstant {
    /// Exponential growth of the number of orthant-confined walks.
    pub value: f64,
    pub certificate: RateCertificate,
}

/// `|S| * min_Q L_μ` for the uniform law on a proper step set.
pub fn growth_constant(steps: &[Lattice]) -> Result<GrowthConstant> {
    let measure = StepMeasure::from_lattice(steps)?;
    let cone = ConeSpec::orthant(measure.dim())?;
    let model = LaplaceModel::finite(measure)?;
    let certificate = minimize_on_dual(&model, &cone, &SolverOptions::default())?;
    Ok(GrowthConstant {
        value: steps.len() as f64 * certificate.rho,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub k_min: f64,
    pub argmin_direction: Vec<f64>,
    pub directions: usize,
}

/// Unit directions of the closed orthant on an angular grid.
pub fn orthant_directions(dim: usize, grid: usize) -> Result<Vec<Vec<f64>>> {
    use std::f64::consts::FRAC_PI_2;
    let angles = |n: usize| -> Vec<f64> {
        if n <= 1 {
            vec![FRAC_PI_2 / 2.0]
        } else {
            (0..n)
                .map(|j| FRAC_PI_2 * j as f64 / (n - 1) as f64)
                .collect()
        }
    };
    match dim {
        1 => Ok(vec![vec![1.0]]),
        2 => Ok(angles(grid)
            .into_iter()
            .map(|a| vec![a.cos(), a.sin()])
            .collect()),
        3 => {
            let mut out = Vec::new();
            for theta in angles(grid) {
                for phi in angles(grid) {
                    out.push(vec![
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ]);
                    if theta == 0.0 {
                        break;
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument(format!(
            "angular scan supports dimensions 1 to 3, got {dim}"
        ))),
    }
}

/// Minimum over orthant directions `u` of `min_{t >= 0} L_S(t u)`: the
/// smallest growth constant among half-planes whose boundary avoids the
/// interior of the orthant.
pub fn hyperplane_scan(steps: &[Lattice], angular_grid: usize) -> Result<ScanResult> {
    let measure = StepMeasure::from_lattice(steps)?;
    let dim = measure.dim();
    if !measure.check_h1() {
        return Err(Error::H1Violated);
    }
    let q = ConeSpec::orthant(dim)?;
    if let Some(witness) = improper_direction(measure.steps(), &q)? {
        return Err(Error::Improper { witness });
    }
    let n = steps.len() as f64;
    let model = LaplaceModel::finite(measure)?;
    let opts = SolverOptions::default();
    let dirs = orthant_directions(dim, angular_grid)?;
    let mut best: Option<(f64, usize)> = None;
    for (i, u) in dirs.iter().enumerate() {
        let (t, _, _) = ray_minimize(&model, u, &opts)?;
        let v = n * model.value(&u.iter().map(|x| t * x).collect::<Vec<_>>())?;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, i));
        }
    }
    let (k_min, i) = best.expect("at least one direction");
    Ok(ScanResult {
        k_min,
        argmin_direction: dirs[i].clone(),
        directions: dirs.len(),
    })
}

/// `exp(-d(a, K)^2 / 2)`: the decay rate of Brownian motion with drift `a`
/// and identity covariance killed on leaving `K`.
pub fn brownian_rate(drift: &[f64], cone: &ConeSpec) -> Result<f64> {
    let d = cone.distance(drift)?;
    Ok((-0.5 * d * d).exp())
}

/// `L(z)` for `z` in the dual cone; an upper bound on the decay rate.
pub fn upper_bound_at(model: &LaplaceModel, cone: &ConeSpec, z: &[f64]) -> Result<f64> {
    if !cone.dual().contains(z, 1e-10)? {
        return Err(Error::InvalidArgument("z is not in the dual cone".into()));
    }
    model.value(z)
}
