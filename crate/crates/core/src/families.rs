//! Closed-form rates for two families used as fixtures: the walk with steps
//! `(1,-1), (-1,1), (-1,-1)` started on an anti-diagonal of the quarter
//! plane, and the simple symmetric walk on a segment.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::enumerate::{count_walks, estimate_rate, EnumOptions};
use crate::error::{Error, Result};
use crate::step::{Lattice, StepMeasure};

/// Stopping tolerance of the segment power iteration.
pub const POWER_TOL: f64 = 1e-12;

fn q_of(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p = {p} must lie in (0, 1)"
        )));
    }
    Ok((1.0 - p) / 2.0)
}

/// `cos(π / (2N + 2))`: survival rate of the ±1 symmetric walk in `[0, 2N]`.
pub fn segment_rate(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    Ok((PI / (2.0 * f64::from(n) + 2.0)).cos())
}

/// `2q cos(π / (2N + 2))` with `q = (1 - p) / 2`: rate from any start with
/// `i + j = 2N`.
pub fn halfspace_rate(p: f64, n: u32) -> Result<f64> {
    Ok(2.0 * q_of(p)? * segment_rate(n)?)
}

/// Steps `(1,-1), (-1,1), (-1,-1)` with weights `(q, q, p)`.
pub fn halfspace_model(p: f64) -> Result<StepMeasure> {
    let q = q_of(p)?;
    StepMeasure::with_weights(
        vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
        vec![q, q, p],
    )
}

/// Top eigenvalue of the sub-stochastic ±1 operator on `2N + 1` states by
/// power iteration on the lazy operator `(I + A) / 2`, which has the same
/// eigenvectors and a positive spectrum.
pub fn segment_power_iteration(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let m = 2 * n as usize + 1;
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < m { v[i + 1] } else { 0.0 };
                0.5 * v[i] + 0.25 * (left + right)
            })
            .collect()
    };
    let mut v = vec![1.0; m];
    let mut lambda = 0.0;
    for _ in 0..1_000_000 {
        let w = apply(&v);
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next = nw / nv;
        v = w.iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= POWER_TOL * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(2.0 * lambda - 1.0)
}

/// Two-step survival ratio `(u_n / u_{n-2})^{1/2}` of the ±1 walk killed on
/// leaving `[0, 2N]`, started at `N`.
pub fn segment_dp_ratio(n: u32, steps: usize) -> Result<f64> {
    if n == 0 || steps < 2 {
        return Err(Error::InvalidArgument(
            "need N >= 1 and at least two steps".into(),
        ));
    }
    let m = 2 * n as usize + 1;
    let mut u = vec![0.0; m];
    u[n as usize] = 1.0;
    let mut totals = Vec::with_capacity(steps + 1);
    totals.push(0.0f64);
    let mut log_scale = 0.0;
    for _ in 0..steps {
        let next: Vec<f64> = (0..m)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < m { u[i + 1] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect();
        let top = next.iter().cloned().fold(0.0, f64::max);
        u = next.iter().map(|x| x / top).collect();
        log_scale += top.ln();
        totals.push(u.iter().sum::<f64>().ln() + log_scale);
    }
    Ok(((totals[steps] - totals[steps - 2]) / 2.0).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartEstimate {
    pub start: Lattice,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceReport {
    pub p: f64,
    pub n: u32,
    pub start: Lattice,
    pub n_max: usize,
    pub closed_form: f64,
    pub dp_estimate: f64,
    pub abs_error: f64,
    /// Estimates from every start on the same anti-diagonal.
    pub diagonal: Vec<StartEstimate>,
    pub diagonal_spread: f64,
    /// Estimate and closed form one anti-diagonal further out.
    pub next_diagonal_estimate: f64,
    pub next_diagonal_closed_form: f64,
}

fn dp_rate(model: &StepMeasure, start: &[i64], n_max: usize) -> Result<f64> {
    let steps = model.lattice_steps()?;
    let series = count_walks(
        &steps,
        Some(model.weights()),
        start,
        &ConeSpec::orthant(2)?,
        n_max,
        EnumOptions::default(),
    )?;
    Ok(estimate_rate(&series)?.extrapolated)
}

/// Compares the enumerated rate from `start` (with `i + j = 2N`) with the
/// closed form, and checks that the rate depends only on the anti-diagonal.
pub fn halfspace_verify(p: f64, n: u32, start: &[i64], n_max: usize) -> Result<HalfspaceReport> {
    let closed_form = halfspace_rate(p, n)?;
    Error::check_dim(2, start.len())?;
    if start.iter().any(|&x| x < 0) {
        return Err(Error::StartOutsideCone(
            start.iter().map(|&x| x as f64).collect(),
        ));
    }
    let level = 2 * i64::from(n);
    if start[0] + start[1] != level {
        return Err(Error::InvalidArgument(format!(
            "start ({}, {}) is not on the anti-diagonal i + j = {level}",
            start[0], start[1]
        )));
    }
    let model = halfspace_model(p)?;
    let dp_estimate = dp_rate(&model, start, n_max)?;
    let diagonal = (0..=level)
        .map(|i| {
            let s = vec![i, level - i];
            Ok(StartEstimate {
                rate: dp_rate(&model, &s, n_max)?,
                start: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = diagonal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| {
            (a.min(e.rate), b.max(e.rate))
        });
    let next = [i64::from(n) + 1, i64::from(n) + 1];
    Ok(HalfspaceReport {
        p,
        n,
        start: start.to_vec(),
        n_max,
        closed_form,
        dp_estimate,
        abs_error: (dp_estimate - closed_form).abs(),
        diagonal,
        diagonal_spread: hi - lo,
        next_diagonal_estimate: dp_rate(&model, &next, n_max)?,
        next_diagonal_closed_form: halfspace_rate(p, n + 1)?,
    })
}
