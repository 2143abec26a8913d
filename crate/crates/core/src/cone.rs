//! Closed convex cones in four representations, with duality, membership,
//! Euclidean projection and the Moreau decomposition.
//!
//! Conversions are limited to the ones that are pure transcriptions:
//! the dual of a cone generated by rays `R` is the intersection of the
//! half-spaces `<r, z> >= 0`, and vice versa. No facet enumeration is done,
//! so projections are only available for cones whose generators (or
//! normals) are mutually orthogonal, which covers the orthant, half-spaces,
//! rays and their polars.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, row_matrix, sub};
use crate::lp::{self, LpOutcome};

/// Absolute floor of the membership tolerance; keeps apex membership exact.
pub const MEMBERSHIP_FLOOR: f64 = 1e-12;
/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

const ORTHOGONALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeKind {
    Orthant,
    Halfspace { normal: Vec<f64> },
    Generated { rays: Vec<Vec<f64>> },
    Inequalities { normals: Vec<Vec<f64>> },
}

impl ConeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConeKind::Orthant => "orthant",
            ConeKind::Halfspace { .. } => "halfspace",
            ConeKind::Generated { .. } => "generated",
            ConeKind::Inequalities { .. } => "inequalities",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    dim: usize,
    #[serde(flatten)]
    kind: ConeKind,
}

fn check_vectors(dim: usize, vs: &[Vec<f64>], what: &str) -> Result<()> {
    if vs.is_empty() {
        return Err(Error::InvalidCone(format!("{what} list is empty")));
    }
    for v in vs {
        Error::check_dim(dim, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCone(format!("{what} has non-finite entries")));
        }
        if norm(v) == 0.0 {
            return Err(Error::InvalidCone(format!("{what} contains a zero vector")));
        }
    }
    Ok(())
}

fn mutually_orthogonal(vs: &[Vec<f64>]) -> bool {
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            let scale = norm(&vs[i]) * norm(&vs[j]);
            if dot(&vs[i], &vs[j]).abs() > ORTHOGONALITY_TOL * scale {
                return false;
            }
        }
    }
    true
}

fn slack(tol: f64, scale: f64) -> f64 {
    (tol * scale).max(MEMBERSHIP_FLOOR)
}

impl ConeSpec {
    pub fn orthant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be at least 1".into()));
        }
        Ok(ConeSpec {
            dim,
            kind: ConeKind::Orthant,
        })
    }

    pub fn halfspace(normal: Vec<f64>) -> Result<Self> {
        let dim = normal.len();
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be at least 1".into()));
        }
        check_vectors(dim, std::slice::from_ref(&normal), "half-space normal")?;
        Ok(ConeSpec {
            dim,
            kind: ConeKind::Halfspace { normal },
        })
    }

    pub fn generated(dim: usize, rays: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be at least 1".into()));
        }
        check_vectors(dim, &rays, "ray")?;
        Ok(ConeSpec {
            dim,
            kind: ConeKind::Generated { rays },
        })
    }

    /// The closed half-line `{t u : t >= 0}`.
    pub fn ray(u: Vec<f64>) -> Result<Self> {
        let dim = u.len();
        Self::generated(dim, vec![u])
    }

    pub fn inequalities(dim: usize, normals: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be at least 1".into()));
        }
        check_vectors(dim, &normals, "inequality normal")?;
        Ok(ConeSpec {
            dim,
            kind: ConeKind::Inequalities { normals },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn is_orthant(&self) -> bool {
        matches!(self.kind, ConeKind::Orthant)
    }

    /// The dual cone `{z : <x, z> >= 0 for all x in K}`.
    pub fn dual(&self) -> ConeSpec {
        let kind = match &self.kind {
            ConeKind::Orthant => ConeKind::Orthant,
            ConeKind::Halfspace { normal } => ConeKind::Generated {
                rays: vec![normal.clone()],
            },
            ConeKind::Generated { rays } => ConeKind::Inequalities {
                normals: rays.clone(),
            },
            ConeKind::Inequalities { normals } => ConeKind::Generated {
                rays: normals.clone(),
            },
        };
        ConeSpec {
            dim: self.dim,
            kind,
        }
    }

    /// `-K`.
    pub fn negated(&self) -> ConeSpec {
        let neg = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            vs.iter().map(|v| v.iter().map(|x| -x).collect()).collect()
        };
        let kind = match &self.kind {
            ConeKind::Orthant => ConeKind::Generated {
                rays: (0..self.dim)
                    .map(|i| {
                        let mut e = vec![0.0; self.dim];
                        e[i] = -1.0;
                        e
                    })
                    .collect(),
            },
            ConeKind::Halfspace { normal } => ConeKind::Halfspace {
                normal: normal.iter().map(|x| -x).collect(),
            },
            ConeKind::Generated { rays } => ConeKind::Generated { rays: neg(rays) },
            ConeKind::Inequalities { normals } => ConeKind::Inequalities {
                normals: neg(normals),
            },
        };
        ConeSpec {
            dim: self.dim,
            kind,
        }
    }

    /// The polar cone `-K*`.
    pub fn polar(&self) -> ConeSpec {
        self.dual().negated()
    }

    /// Normals `n_i` with `K = {x : <n_i, x> >= 0}`, when the representation
    /// provides them directly.
    pub fn constraint_normals(&self) -> Option<Vec<Vec<f64>>> {
        match &self.kind {
            ConeKind::Orthant => Some(
                (0..self.dim)
                    .map(|i| {
                        let mut e = vec![0.0; self.dim];
                        e[i] = 1.0;
                        e
                    })
                    .collect(),
            ),
            ConeKind::Halfspace { normal } => Some(vec![normal.clone()]),
            ConeKind::Inequalities { normals } => Some(normals.clone()),
            ConeKind::Generated { .. } => None,
        }
    }

    /// Minimal L1 residual of `x = sum t_i r_i, t >= 0`.
    fn generated_residual(rays: &[Vec<f64>], x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let dim = x.len();
        let a: Vec<Vec<f64>> = (0..dim)
            .map(|j| rays.iter().map(|r| r[j]).collect())
            .collect();
        match lp::feasible_point(&a, x, 1e-13) {
            LpOutcome::Optimal { x: t, .. } => {
                let mut y = vec![0.0; dim];
                for (ti, r) in t.iter().zip(rays) {
                    y = axpy(&y, *ti, r);
                }
                (norm(&sub(&y, x)), Some(t))
            }
            LpOutcome::Infeasible { residual } => (residual, None),
            LpOutcome::Unbounded => (f64::INFINITY, None),
        }
    }

    /// Membership up to a tolerance that scales with the magnitudes involved,
    /// with absolute floor [`MEMBERSHIP_FLOOR`].
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Error::check_dim(self.dim, x.len())?;
        let nx = norm(x);
        Ok(match &self.kind {
            ConeKind::Orthant => {
                let s = slack(tol, nx.max(1.0));
                x.iter().all(|&xi| xi >= -s)
            }
            ConeKind::Halfspace { normal } => dot(normal, x) >= -slack(tol, norm(normal) * nx),
            ConeKind::Inequalities { normals } => normals
                .iter()
                .all(|a| dot(a, x) >= -slack(tol, norm(a) * nx)),
            ConeKind::Generated { rays } => {
                let (res, _) = Self::generated_residual(rays, x);
                res <= slack(tol, nx.max(1.0))
            }
        })
    }

    /// How far `x` is from satisfying the cone's constraints:
    /// `max_i max(0, -<n_i, x>) / |n_i|` for constraint representations and
    /// the least-squares residual for generated cones.
    pub fn violation(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        if let Some(normals) = self.constraint_normals() {
            Ok(normals
                .iter()
                .map(|a| (-dot(a, x) / norm(a)).max(0.0))
                .fold(0.0, f64::max))
        } else if let ConeKind::Generated { rays } = &self.kind {
            Ok(Self::generated_residual(rays, x).0)
        } else {
            unreachable!()
        }
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, a: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim, a.len())?;
        match &self.kind {
            ConeKind::Orthant => Ok(a.iter().map(|&x| x.max(0.0)).collect()),
            ConeKind::Halfspace { normal } => {
                Ok(project_inequalities(std::slice::from_ref(normal), a))
            }
            ConeKind::Generated { rays } if mutually_orthogonal(rays) => {
                let mut p = vec![0.0; self.dim];
                for r in rays {
                    let c = (dot(r, a) / dot(r, r)).max(0.0);
                    p = axpy(&p, c, r);
                }
                Ok(p)
            }
            ConeKind::Inequalities { normals } if mutually_orthogonal(normals) => {
                Ok(project_inequalities(normals, a))
            }
            other => Err(Error::UnsupportedCone {
                op: "projection",
                kind: other.name(),
            }),
        }
    }

    pub fn distance(&self, a: &[f64]) -> Result<f64> {
        let p = self.project(a)?;
        Ok(norm(&sub(a, &p)))
    }

    /// `a = p_K + p_polar` with the two parts orthogonal.
    pub fn moreau_decompose(&self, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let pk = self.project(a)?;
        let pp = self.polar().project(a)?;
        Ok((pk, pp))
    }

    pub fn has_interior(&self) -> bool {
        match &self.kind {
            ConeKind::Orthant | ConeKind::Halfspace { .. } => true,
            ConeKind::Generated { rays } => {
                crate::linalg::rank(&row_matrix(rays, self.dim), RANK_TOL) == self.dim
            }
            ConeKind::Inequalities { normals } => {
                interior_point_of_inequalities(normals, self.dim).is_some()
            }
        }
    }

    /// Whether `v` lies in the (topological) interior of the cone.
    pub fn is_interior(&self, v: &[f64]) -> Result<bool> {
        Error::check_dim(self.dim, v.len())?;
        let nv = norm(v);
        if nv == 0.0 {
            return Ok(false);
        }
        if let Some(normals) = self.constraint_normals() {
            return Ok(normals
                .iter()
                .all(|a| dot(a, v) > MEMBERSHIP_FLOOR * norm(a) * nv));
        }
        if !self.has_interior() {
            return Ok(false);
        }
        // A cross-polytope around v inside a convex cone contains a ball.
        let eps = 1e-6 * nv;
        for i in 0..self.dim {
            for sign in [-1.0, 1.0] {
                let mut w = v.to_vec();
                w[i] += sign * eps;
                if !self.contains(&w, 0.0)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// A canonical interior direction: all-ones for the orthant, the normal of
    /// a half-space, the sum of unit rays for a generated cone, and an LP
    /// point with `A x >= 1` for an inequality cone.
    pub fn default_interior_vector(&self) -> Option<Vec<f64>> {
        let v = match &self.kind {
            ConeKind::Orthant => vec![1.0; self.dim],
            ConeKind::Halfspace { normal } => normal.clone(),
            ConeKind::Generated { rays } => {
                let mut s = vec![0.0; self.dim];
                for r in rays {
                    s = axpy(&s, 1.0 / norm(r), r);
                }
                s
            }
            ConeKind::Inequalities { normals } => {
                interior_point_of_inequalities(normals, self.dim)?
            }
        };
        match self.is_interior(&v) {
            Ok(true) => Some(v),
            _ => None,
        }
    }

    /// Membership in the shifted cone `K + delta * v`; `v` must be interior.
    pub fn contains_shifted(&self, v: &[f64], delta: f64, x: &[f64]) -> Result<bool> {
        Error::check_dim(self.dim, x.len())?;
        if !self.is_interior(v)? {
            return Err(Error::NotInterior);
        }
        self.contains(&axpy(x, -delta, v), MEMBERSHIP_FLOOR)
    }

    /// Strict membership, used for lattice points where any positive margin
    /// is bounded away from zero.
    pub fn contains_strictly(&self, x: &[f64]) -> Result<bool> {
        self.is_interior(x)
    }
}

/// Projection onto `{x : <n_i, x> >= 0}` for mutually orthogonal normals.
fn project_inequalities(normals: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    let mut p = a.to_vec();
    for n in normals {
        let c = dot(n, a) / dot(n, n);
        if c < 0.0 {
            p = axpy(&p, -c, n);
        }
    }
    p
}

/// Solves `A x >= 1` with `x` free (split as `x+ - x-`).
fn interior_point_of_inequalities(normals: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    let m = normals.len();
    let a: Vec<Vec<f64>> = normals
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut row = Vec::with_capacity(2 * dim + m);
            row.extend_from_slice(n);
            row.extend(n.iter().map(|x| -x));
            row.extend((0..m).map(|k| if k == i { -1.0 } else { 0.0 }));
            row
        })
        .collect();
    match lp::feasible_point(&a, &vec![1.0; m], 1e-10) {
        LpOutcome::Optimal { x, .. } => Some((0..dim).map(|j| x[j] - x[dim + j]).collect()),
        _ => None,
    }
}

/// Cone literal as written on the command line: `orthant`,
/// `halfspace:u1,u2,...`, `rays:[[..],[..]]`, `ineq:[[..],[..]]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeLiteral {
    Orthant,
    Halfspace(Vec<f64>),
    Rays(Vec<Vec<f64>>),
    Ineq(Vec<Vec<f64>>),
}

impl ConeLiteral {
    pub fn resolve(&self, dim: usize) -> Result<ConeSpec> {
        let spec = match self {
            ConeLiteral::Orthant => ConeSpec::orthant(dim)?,
            ConeLiteral::Halfspace(u) => {
                Error::check_dim(dim, u.len())?;
                ConeSpec::halfspace(u.clone())?
            }
            ConeLiteral::Rays(r) => ConeSpec::generated(dim, r.clone())?,
            ConeLiteral::Ineq(a) => ConeSpec::inequalities(dim, a.clone())?,
        };
        Ok(spec)
    }
}

impl FromStr for ConeLiteral {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "orthant" {
            return Ok(ConeLiteral::Orthant);
        }
        let (head, body) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown cone literal `{s}`")))?;
        let nested = |body: &str| -> Result<Vec<Vec<f64>>> {
            serde_json::from_str(body).map_err(|e| Error::Parse(format!("cone vectors: {e}")))
        };
        match head.trim() {
            "halfspace" => {
                let u = body
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("half-space normal: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ConeLiteral::Halfspace(u))
            }
            "rays" => Ok(ConeLiteral::Rays(nested(body)?)),
            "ineq" => Ok(ConeLiteral::Ineq(nested(body)?)),
            other => Err(Error::Parse(format!("unknown cone kind `{other}`"))),
        }
    }
}

impl fmt::Display for ConeLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vecs = |vs: &[Vec<f64>]| serde_json::to_string(vs).unwrap_or_default();
        match self {
            ConeLiteral::Orthant => write!(f, "orthant"),
            ConeLiteral::Halfspace(u) => {
                let parts: Vec<String> = u.iter().map(|x| x.to_string()).collect();
                write!(f, "halfspace:{}", parts.join(","))
            }
            ConeLiteral::Rays(r) => write!(f, "rays:{}", vecs(r)),
            ConeLiteral::Ineq(a) => write!(f, "ineq:{}", vecs(a)),
        }
    }
}

impl From<&ConeSpec> for ConeLiteral {
    fn from(c: &ConeSpec) -> Self {
        match &c.kind {
            ConeKind::Orthant => ConeLiteral::Orthant,
            ConeKind::Halfspace { normal } => ConeLiteral::Halfspace(normal.clone()),
            ConeKind::Generated { rays } => ConeLiteral::Rays(rays.clone()),
            ConeKind::Inequalities { normals } => ConeLiteral::Ineq(normals.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2() -> ConeSpec {
        ConeSpec::orthant(2).unwrap()
    }

    #[test]
    fn membership_examples() {
        assert!(q2().contains(&[0.0, 0.0], 0.0).unwrap());
        let h = ConeSpec::halfspace(vec![1.0, 1.0]).unwrap();
        assert!(!h.contains(&[1.0, -2.0], 0.0).unwrap());
        let g = ConeSpec::generated(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(g.contains(&[2.0, 1.0], 0.0).unwrap());
        assert!(!g.contains(&[0.0, 1.0], 1e-9).unwrap());
    }

    #[test]
    fn membership_dimension_mismatch() {
        assert_eq!(
            q2().contains(&[1.0], 0.0),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn invalid_constructions() {
        assert!(ConeSpec::orthant(0).is_err());
        assert!(ConeSpec::halfspace(vec![0.0, 0.0]).is_err());
        assert!(ConeSpec::generated(2, vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(ConeSpec::inequalities(2, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn dual_examples() {
        assert_eq!(
            ConeSpec::orthant(3).unwrap().dual(),
            ConeSpec::orthant(3).unwrap()
        );
        let h = ConeSpec::halfspace(vec![1.0, 2.0]).unwrap();
        assert_eq!(h.dual(), ConeSpec::ray(vec![1.0, 2.0]).unwrap());
        let g = ConeSpec::generated(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(
            g.dual(),
            ConeSpec::inequalities(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
        );
    }

    #[test]
    fn projection_examples() {
        assert_eq!(q2().project(&[-1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(q2().project(&[3.0, -2.0]).unwrap(), vec![3.0, 0.0]);
        let r = ConeSpec::ray(vec![1.0, 1.0]).unwrap();
        assert_eq!(r.project(&[2.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        let g = ConeSpec::generated(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            g.project(&[0.0, 1.0]),
            Err(Error::UnsupportedCone { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        assert!((q2().distance(&[-1.0, -1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(q2().distance(&[1.0, 1.0]).unwrap(), 0.0);
        let h = ConeSpec::halfspace(vec![0.0, 1.0]).unwrap();
        assert_eq!(h.distance(&[5.0, -3.0]).unwrap(), 3.0);
    }

    #[test]
    fn moreau_examples() {
        let (pk, pp) = q2().moreau_decompose(&[-1.0, 2.0]).unwrap();
        assert_eq!(pk, vec![0.0, 2.0]);
        assert_eq!(pp, vec![-1.0, 0.0]);
        let (pk, pp) = q2().moreau_decompose(&[3.0, 4.0]).unwrap();
        assert_eq!(pk, vec![3.0, 4.0]);
        assert_eq!(pp, vec![0.0, 0.0]);
        let (pk, pp) = q2().moreau_decompose(&[-1.0, -1.0]).unwrap();
        assert_eq!(pk, vec![0.0, 0.0]);
        assert_eq!(pp, vec![-1.0, -1.0]);
    }

    #[test]
    fn shifted_examples() {
        let v = [1.0, 1.0];
        assert!(q2().contains_shifted(&v, 1.0, &[1.0, 1.0]).unwrap());
        assert!(!q2().contains_shifted(&v, 1.0, &[0.5, 2.0]).unwrap());
        assert!(q2().contains_shifted(&v, -1.0, &[-0.5, 0.0]).unwrap());
        assert_eq!(
            q2().contains_shifted(&[1.0, 0.0], 1.0, &[1.0, 1.0]),
            Err(Error::NotInterior)
        );
    }

    #[test]
    fn interior_examples() {
        assert!(ConeSpec::orthant(3).unwrap().has_interior());
        let slab = ConeSpec::inequalities(2, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert!(!slab.has_interior());
        let ray = ConeSpec::generated(2, vec![vec![1.0, 0.0]]).unwrap();
        assert!(!ray.has_interior());
        let wedge = ConeSpec::inequalities(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(wedge.has_interior());
        let v = wedge.default_interior_vector().unwrap();
        assert!(wedge.is_interior(&v).unwrap());
    }

    #[test]
    fn generated_interior_vector() {
        let g = ConeSpec::generated(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let v = g.default_interior_vector().unwrap();
        assert!(g.is_interior(&v).unwrap());
        assert!(!g.is_interior(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn literal_round_trip() {
        for s in [
            "orthant",
            "halfspace:1,-2",
            "rays:[[1.0,0.0],[1.0,1.0]]",
            "ineq:[[1.0,0.0]]",
        ] {
            let lit: ConeLiteral = s.parse().unwrap();
            let again: ConeLiteral = lit.to_string().parse().unwrap();
            assert_eq!(lit, again);
        }
        assert!("cylinder".parse::<ConeLiteral>().is_err());
        assert!("halfspace:1,x".parse::<ConeLiteral>().is_err());
        let c = "halfspace:0,1"
            .parse::<ConeLiteral>()
            .unwrap()
            .resolve(2)
            .unwrap();
        assert_eq!(c, ConeSpec::halfspace(vec![0.0, 1.0]).unwrap());
        assert!("halfspace:0,1"
            .parse::<ConeLiteral>()
            .unwrap()
            .resolve(3)
            .is_err());
    }
}
