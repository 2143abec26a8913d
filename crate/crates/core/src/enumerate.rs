//! Exact enumeration of orthant-confined walks by layered dynamic
//! programming, and rate estimation from the resulting series.
//!
//! Layer `n` holds, for every lattice point `y` of the orthant, the (weighted)
//! number of `n`-step walks from the start that never left the orthant and
//! end at `y`. Layers live in a dense box that is trimmed to the support of
//! the layer after every step, so models whose walks stay in a thin region
//! (for instance a diagonal band) cost far less than the worst case.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::laplace::LaplaceModel;
use crate::linalg::{dot, pairwise_sum};
use crate::step::{bfs_path, Lattice, StepMeasure, EXP_GUARD};

pub const MAX_STEPS_2D: usize = 2000;
pub const MAX_STEPS_3D: usize = 120;
pub const MAX_STEPS_EXACT: usize = 200;
/// Candidate periods for the ratio estimator.
pub const PERIODS: [usize; 5] = [1, 2, 3, 4, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumMode {
    /// Arbitrary-precision counts with unit weights.
    Exact,
    /// Double-precision layers renormalized to maximum 1 each step.
    LogScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumOptions {
    pub mode: EnumMode,
    pub threads: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions {
            mode: EnumMode::LogScaled,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesValue {
    Exact(BigUint),
    /// `mantissa * exp(log_scale)`.
    Scaled {
        mantissa: f64,
        log_scale: f64,
    },
}

impl SeriesValue {
    pub fn ln(&self) -> f64 {
        match self {
            SeriesValue::Exact(v) => ln_biguint(v),
            SeriesValue::Scaled {
                mantissa,
                log_scale,
            } => {
                if *mantissa > 0.0 {
                    mantissa.ln() + log_scale
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SeriesValue::Exact(v) => v.is_zero(),
            SeriesValue::Scaled { mantissa, .. } => *mantissa == 0.0,
        }
    }
}

pub fn ln_biguint(v: &BigUint) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = v.bits();
    if bits <= 1000 {
        v.to_f64().expect("fits in f64").ln()
    } else {
        let shift = bits - 64;
        let top: BigUint = v >> shift;
        top.to_f64().expect("64 bits").ln() + shift as f64 * std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    pub start: Lattice,
    pub n_max: usize,
    pub values: Vec<SeriesValue>,
    pub model_id: String,
    /// Total step weight; `values[n] / normalizer^n` is the survival
    /// probability (for unit weights, `|S|`).
    pub normalizer: f64,
    pub mode: EnumMode,
}

impl CountSeries {
    /// `ln P[τ > n]`.
    pub fn ln_survival(&self, n: usize) -> f64 {
        self.values[n].ln() - n as f64 * self.normalizer.ln()
    }

    pub fn survival(&self, n: usize) -> f64 {
        self.ln_survival(n).exp()
    }

    pub fn exact(&self, n: usize) -> Option<&BigUint> {
        match &self.values[n] {
            SeriesValue::Exact(v) => Some(v),
            SeriesValue::Scaled { .. } => None,
        }
    }
}

trait Mass: Clone + Send + Sync {
    fn zero() -> Self;
    fn is_nonzero(&self) -> bool;
    fn add_scaled(&mut self, src: &Self, w: f64);
}

impl Mass for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_nonzero(&self) -> bool {
        *self != 0.0
    }
    fn add_scaled(&mut self, src: &Self, w: f64) {
        *self += w * src;
    }
}

impl Mass for BigUint {
    fn zero() -> Self {
        <BigUint as Zero>::zero()
    }
    fn is_nonzero(&self) -> bool {
        !self.is_zero()
    }
    fn add_scaled(&mut self, src: &Self, _w: f64) {
        *self += src;
    }
}

/// Dense box of cells, last axis contiguous.
#[derive(Debug, Clone)]
struct Layer<T> {
    lo: Vec<i64>,
    shape: Vec<usize>,
    cells: Vec<T>,
}

impl<T: Mass> Layer<T> {
    fn point(start: &[i64], value: T) -> Self {
        Layer {
            lo: start.to_vec(),
            shape: vec![1; start.len()],
            cells: vec![value],
        }
    }

    fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn coords(&self, mut idx: usize) -> Lattice {
        let d = self.shape.len();
        let mut c = vec![0i64; d];
        for k in (0..d).rev() {
            c[k] = self.lo[k] + (idx % self.shape[k]) as i64;
            idx /= self.shape[k];
        }
        c
    }

    /// One step of the orthant-confined recurrence
    /// `g_n(y) = sum_s w_s g_{n-1}(y - s)`, restricted to `y >= 0`.
    fn propagate(
        &self,
        steps: &[Lattice],
        weights: &[f64],
        pool: Option<&rayon::ThreadPool>,
    ) -> Layer<T> {
        let d = self.shape.len();
        if self.is_empty() {
            return self.clone();
        }
        let mut lo = vec![0i64; d];
        let mut shape = vec![0usize; d];
        for k in 0..d {
            let smin = steps.iter().map(|s| s[k]).min().unwrap();
            let smax = steps.iter().map(|s| s[k]).max().unwrap();
            let hi = self.lo[k] + self.shape[k] as i64 - 1 + smax;
            lo[k] = (self.lo[k] + smin).max(0);
            if hi < lo[k] {
                return Layer {
                    lo,
                    shape: vec![0; d],
                    cells: Vec::new(),
                };
            }
            shape[k] = (hi - lo[k] + 1) as usize;
        }
        let row_len = shape[d - 1];
        let total: usize = shape.iter().product();
        let mut cells = vec![T::zero(); total];

        let prev = self;
        let fill_row = |r: usize, row: &mut [T]| {
            // Prefix coordinates of output row r.
            let mut prefix = vec![0i64; d - 1];
            let mut rem = r;
            for k in (0..d - 1).rev() {
                prefix[k] = lo[k] + (rem % shape[k]) as i64;
                rem /= shape[k];
            }
            let prev_row_len = prev.shape[d - 1];
            for (s, &w) in steps.iter().zip(weights) {
                let mut src_row = 0usize;
                let mut inside = true;
                for k in 0..d - 1 {
                    let c = prefix[k] - s[k] - prev.lo[k];
                    if c < 0 || c >= prev.shape[k] as i64 {
                        inside = false;
                        break;
                    }
                    src_row = src_row * prev.shape[k] + c as usize;
                }
                if !inside {
                    continue;
                }
                let src = &prev.cells[src_row * prev_row_len..(src_row + 1) * prev_row_len];
                // Output column j reads source column j + off.
                let off = lo[d - 1] - s[d - 1] - prev.lo[d - 1];
                let j_start = (-off).max(0) as usize;
                let j_end = ((prev_row_len as i64 - off).min(row_len as i64)).max(0) as usize;
                for j in j_start..j_end {
                    let v = &src[(j as i64 + off) as usize];
                    if v.is_nonzero() {
                        row[j].add_scaled(v, w);
                    }
                }
            }
        };

        match pool {
            Some(pool) => pool.install(|| {
                cells
                    .par_chunks_mut(row_len)
                    .enumerate()
                    .for_each(|(r, row)| fill_row(r, row));
            }),
            None => cells
                .chunks_mut(row_len)
                .enumerate()
                .for_each(|(r, row)| fill_row(r, row)),
        }
        Layer { lo, shape, cells }.trimmed()
    }

    /// Shrinks the box to the bounding box of nonzero cells.
    fn trimmed(self) -> Layer<T> {
        let d = self.shape.len();
        let mut min = vec![i64::MAX; d];
        let mut max = vec![i64::MIN; d];
        let mut any = false;
        for (i, v) in self.cells.iter().enumerate() {
            if v.is_nonzero() {
                any = true;
                let c = self.coords(i);
                for k in 0..d {
                    min[k] = min[k].min(c[k]);
                    max[k] = max[k].max(c[k]);
                }
            }
        }
        if !any {
            return Layer {
                lo: self.lo,
                shape: vec![0; d],
                cells: Vec::new(),
            };
        }
        let unchanged =
            (0..d).all(|k| min[k] == self.lo[k] && max[k] == self.lo[k] + self.shape[k] as i64 - 1);
        if unchanged {
            return self;
        }
        let shape: Vec<usize> = (0..d).map(|k| (max[k] - min[k] + 1) as usize).collect();
        let total: usize = shape.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut c = min.clone();
        for _ in 0..total {
            let idx = c
                .iter()
                .zip(&self.lo)
                .zip(&self.shape)
                .fold(0usize, |acc, ((ci, lo), n)| acc * n + (ci - lo) as usize);
            cells.push(self.cells[idx].clone());
            for k in (0..d).rev() {
                c[k] += 1;
                if c[k] <= max[k] {
                    break;
                }
                c[k] = min[k];
            }
        }
        Layer {
            lo: min,
            shape,
            cells,
        }
    }

    fn into_map(self) -> BTreeMap<Lattice, T> {
        let mut out = BTreeMap::new();
        for (i, v) in self.cells.iter().enumerate() {
            if v.is_nonzero() {
                out.insert(self.coords(i), v.clone());
            }
        }
        out
    }
}

struct Prepared {
    steps: Vec<Lattice>,
    dim: usize,
}

fn prepare(steps: &[Lattice], start: &[i64], cone: &ConeSpec) -> Result<Prepared> {
    let first = steps
        .first()
        .ok_or_else(|| Error::InvalidMeasure("empty step set".into()))?;
    let dim = first.len();
    for s in steps {
        Error::check_dim(dim, s.len())?;
    }
    Error::check_dim(dim, start.len())?;
    Error::check_dim(dim, cone.dim())?;
    if !cone.is_orthant() {
        return Err(Error::UnsupportedCone {
            op: "walk enumeration",
            kind: cone.kind().name(),
        });
    }
    if start.iter().any(|&x| x < 0) {
        return Err(Error::StartOutsideCone(
            start.iter().map(|&x| x as f64).collect(),
        ));
    }
    Ok(Prepared {
        steps: steps.to_vec(),
        dim,
    })
}

fn check_horizon(dim: usize, n: usize, mode: EnumMode) -> Result<()> {
    let limit = match dim {
        1 => usize::MAX,
        2 => MAX_STEPS_2D,
        3 => MAX_STEPS_3D,
        _ => 40,
    };
    let limit = if mode == EnumMode::Exact {
        limit.min(MAX_STEPS_EXACT)
    } else {
        limit
    };
    if n > limit {
        return Err(Error::InvalidArgument(format!(
            "horizon {n} exceeds the enumeration limit {limit} for dimension {dim}"
        )));
    }
    Ok(())
}

fn make_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn model_id(steps: &[Lattice], weights: Option<&[f64]>) -> String {
    let s = serde_json::to_string(steps).unwrap_or_default();
    match weights {
        Some(w) => format!(
            "steps={s} weights={} cone=orthant",
            serde_json::to_string(w).unwrap_or_default()
        ),
        None => format!("steps={s} cone=orthant"),
    }
}

/// Counts (or weighs) orthant-confined walks of every length up to `n_max`.
///
/// In exact mode the weights must be absent or all one, and the series holds
/// exact integers. In log-scaled mode each layer is divided by its maximum
/// and the logarithm of that factor is accumulated, so long horizons stay in
/// range.
pub fn count_walks(
    steps: &[Lattice],
    weights: Option<&[f64]>,
    start: &[i64],
    cone: &ConeSpec,
    n_max: usize,
    opts: EnumOptions,
) -> Result<CountSeries> {
    let prep = prepare(steps, start, cone)?;
    check_horizon(prep.dim, n_max, opts.mode)?;
    let unit = vec![1.0; steps.len()];
    let w: &[f64] = match weights {
        Some(w) => {
            if w.len() != steps.len() {
                return Err(Error::InvalidMeasure(format!(
                    "{} weights for {} steps",
                    w.len(),
                    steps.len()
                )));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidMeasure(
                    "weights must be strictly positive".into(),
                ));
            }
            w
        }
        None => &unit,
    };
    if opts.mode == EnumMode::Exact && w.iter().any(|&x| x != 1.0) {
        return Err(Error::InvalidArgument(
            "exact mode counts walks with unit weights".into(),
        ));
    }
    let pool = make_pool(opts.threads)?;
    let normalizer: f64 = w.iter().sum();

    let mut values = Vec::with_capacity(n_max + 1);
    match opts.mode {
        EnumMode::Exact => {
            let mut layer = Layer::point(start, BigUint::from(1u32));
            values.push(SeriesValue::Exact(BigUint::from(1u32)));
            for _ in 0..n_max {
                layer = layer.propagate(&prep.steps, w, pool.as_ref());
                let total: BigUint = layer.cells.iter().sum();
                values.push(SeriesValue::Exact(total));
            }
        }
        EnumMode::LogScaled => {
            let mut layer = Layer::point(start, 1.0f64);
            let mut log_scale = 0.0;
            values.push(SeriesValue::Scaled {
                mantissa: 1.0,
                log_scale: 0.0,
            });
            for _ in 0..n_max {
                layer = layer.propagate(&prep.steps, w, pool.as_ref());
                let top = layer.cells.iter().cloned().fold(0.0f64, f64::max);
                if top > 0.0 {
                    for v in layer.cells.iter_mut() {
                        *v /= top;
                    }
                    log_scale += top.ln();
                }
                values.push(SeriesValue::Scaled {
                    mantissa: pairwise_sum(&layer.cells),
                    log_scale,
                });
            }
        }
    }
    Ok(CountSeries {
        start: start.to_vec(),
        n_max,
        values,
        model_id: model_id(steps, weights),
        normalizer,
        mode: opts.mode,
    })
}

/// Exact number of confined `n`-step walks ending at each point.
pub fn end_point_counts(
    steps: &[Lattice],
    start: &[i64],
    cone: &ConeSpec,
    n: usize,
) -> Result<BTreeMap<Lattice, BigUint>> {
    let prep = prepare(steps, start, cone)?;
    check_horizon(prep.dim, n, EnumMode::Exact)?;
    let unit = vec![1.0; steps.len()];
    let mut layer = Layer::point(start, BigUint::from(1u32));
    for _ in 0..n {
        layer = layer.propagate(&prep.steps, &unit, None);
    }
    Ok(layer.into_map())
}

/// `P[S_n = y, τ > n]` for every `y`, in double precision without
/// renormalization (meant for short horizons).
pub fn end_point_masses(
    steps: &[Lattice],
    weights: &[f64],
    start: &[i64],
    cone: &ConeSpec,
    n: usize,
) -> Result<BTreeMap<Lattice, f64>> {
    let prep = prepare(steps, start, cone)?;
    check_horizon(prep.dim, n, EnumMode::LogScaled)?;
    if weights.len() != steps.len() {
        return Err(Error::InvalidMeasure(format!(
            "{} weights for {} steps",
            weights.len(),
            steps.len()
        )));
    }
    let mut layer = Layer::point(start, 1.0f64);
    for _ in 0..n {
        layer = layer.propagate(&prep.steps, weights, None);
    }
    Ok(layer.into_map())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub period: usize,
    /// Whether the period-`period` ratio sequence was smooth over the tail.
    pub smooth: bool,
    /// `(P[τ>n] / P[τ>n-p])^{1/p}` at `n = n_max`.
    pub raw_ratio: f64,
    /// Intercept of a fit `r_n = a + b/n` over the last quarter, clamped to [0, 1].
    pub extrapolated: f64,
    /// Same quantities multiplied by the normalizer (growth of the weighted count).
    pub growth_raw: f64,
    pub growth_extrapolated: f64,
    pub died_out: bool,
}

fn ratio_at(ls: &[f64], n: usize, p: usize) -> f64 {
    (ls[n] - ls[n - p]) / p as f64
}

fn tail_window(n_max: usize, p: usize) -> std::ops::RangeInclusive<usize> {
    let q = (n_max / 4).max(2 * p);
    let from = n_max.saturating_sub(q).max(p);
    from..=n_max
}

/// Least-squares intercept of `r = a + b / n`.
fn fit_intercept(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (n, r)| (a + 1.0 / n, b + r));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (n, r) in points {
        let x = 1.0 / n - mx;
        sxx += x * x;
        sxy += x * (r - my);
    }
    if sxx == 0.0 {
        return Some(my);
    }
    Some(my - (sxy / sxx) * mx)
}

fn extrapolate(ls: &[f64], window: std::ops::RangeInclusive<usize>, p: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = window
        .map(|n| (n as f64, ratio_at(ls, n, p).exp()))
        .collect();
    fit_intercept(&pts)
}

/// Per-step decay rate of the survival probabilities in `series`.
///
/// The period is the smallest `p` in [`PERIODS`] whose `p`-step log-ratio
/// sequence is smooth over the last quarter (total variation at most 1.5
/// times its net change). Parity effects in lattice models make the
/// one-step ratios oscillate, and the `p`-step ratio removes that.
pub fn estimate_rate(series: &CountSeries) -> Result<RateEstimate> {
    let n_max = series.n_max;
    if n_max < 2 {
        return Err(Error::InvalidArgument(
            "series too short for rate estimation".into(),
        ));
    }
    let ls: Vec<f64> = (0..=n_max).map(|n| series.ln_survival(n)).collect();
    let norm = series.normalizer;
    let dead = |window: &std::ops::RangeInclusive<usize>, p: usize| {
        ls[window.start() - p..=*window.end()]
            .iter()
            .any(|v| !v.is_finite())
    };
    if !ls[n_max].is_finite() || dead(&tail_window(n_max, 1), 1) {
        return Ok(RateEstimate {
            period: 1,
            smooth: true,
            raw_ratio: 0.0,
            extrapolated: 0.0,
            growth_raw: 0.0,
            growth_extrapolated: 0.0,
            died_out: true,
        });
    }

    let mut chosen: Option<(usize, bool)> = None;
    let mut best_tv: Option<(f64, usize)> = None;
    for &p in PERIODS.iter() {
        if n_max < 2 * p {
            continue;
        }
        let window = tail_window(n_max, p);
        if dead(&window, p) {
            continue;
        }
        let seq: Vec<f64> = window.clone().map(|n| ratio_at(&ls, n, p)).collect();
        let tv: f64 = seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let net = (seq[seq.len() - 1] - seq[0]).abs();
        if tv <= 1.5 * net + 1e-9 {
            chosen = Some((p, true));
            break;
        }
        if best_tv.is_none_or(|(b, _)| tv < b) {
            best_tv = Some((tv, p));
        }
    }
    let (period, smooth) = chosen.unwrap_or_else(|| (best_tv.map_or(1, |(_, p)| p), false));
    let raw_ratio = ratio_at(&ls, n_max, period).exp();
    let extrapolated = extrapolate(&ls, tail_window(n_max, period), period)
        .unwrap_or(raw_ratio)
        .clamp(0.0, 1.0);
    Ok(RateEstimate {
        period,
        smooth,
        raw_ratio,
        extrapolated,
        growth_raw: raw_ratio * norm,
        growth_extrapolated: extrapolated * norm,
        died_out: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub n: usize,
    /// Exact count (exact mode) or `ln P[τ > n]` (log-scaled mode).
    pub count_or_logprob: String,
    pub ratio: Option<f64>,
    pub extrapolated_rate: Option<f64>,
}

/// Per-length rows for export: value, `period`-step ratio, and the
/// extrapolated rate using data up to that length.
pub fn series_rows(series: &CountSeries, period: usize) -> Vec<SeriesRow> {
    let ls: Vec<f64> = (0..=series.n_max).map(|n| series.ln_survival(n)).collect();
    (0..=series.n_max)
        .map(|n| {
            let count_or_logprob = match &series.values[n] {
                SeriesValue::Exact(v) => v.to_string(),
                SeriesValue::Scaled { .. } => format!("{}", ls[n]),
            };
            let ratio = (n >= period && ls[n].is_finite() && ls[n - period].is_finite())
                .then(|| ratio_at(&ls, n, period).exp());
            let extrapolated_rate = if n >= 16 {
                let w = tail_window(n, period);
                if ls[w.start() - period..=n].iter().all(|v| v.is_finite()) {
                    extrapolate(&ls, w, period).map(|v| v.clamp(0.0, 1.0))
                } else {
                    Some(0.0)
                }
            } else {
                None
            };
            SeriesRow {
                n,
                count_or_logprob,
                ratio,
                extrapolated_rate,
            }
        })
        .collect()
}

/// Largest relative discrepancy, over endpoints `y` with positive mass, in
/// `P_μ[S_n = y, τ > n] = L(z)^n e^{<z, x - y>} P_{μ_z}[S_n = y, τ > n]`.
pub fn cramer_identity_check(
    measure: &StepMeasure,
    z: &[f64],
    start: &[i64],
    cone: &ConeSpec,
    n: usize,
) -> Result<f64> {
    let steps = measure.lattice_steps()?;
    Error::check_dim(measure.dim(), z.len())?;
    let tilted = measure.tilt(z)?;
    let model = LaplaceModel::finite(measure.clone())?;
    let ln_l = model.value(z)?.ln();
    let plain = end_point_masses(&steps, measure.weights(), start, cone, n)?;
    let shifted = end_point_masses(&steps, tilted.weights(), start, cone, n)?;
    let x: Vec<f64> = start.iter().map(|&v| v as f64).collect();
    let mut worst = 0.0f64;
    for (y, &p) in &plain {
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let expo = n as f64 * ln_l + dot(z, &x) - dot(z, &yf);
        if expo.abs() > EXP_GUARD {
            return Err(Error::Overflow { exponent: expo });
        }
        let q = shifted.get(y).copied().unwrap_or(0.0);
        let rhs = if expo == 0.0 { q } else { expo.exp() * q };
        worst = worst.max((p - rhs).abs() / p);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DeltaSearch {
    Found {
        delta: f64,
        n0: usize,
        path: Vec<Lattice>,
    },
    NotFound {
        /// Half-space witness when the step set is improper for the cone.
        witness: Option<Vec<f64>>,
    },
}

pub fn default_delta_grid() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

/// Smallest `δ` in the grid for which some path of at most `n_max` steps
/// from the origin stays in `K - δ v` and ends in the interior of `K`.
/// Any such `δ` makes the rate valid from every start in `K + δ v`.
pub fn find_delta(
    steps: &[Lattice],
    cone: &ConeSpec,
    v: &[f64],
    delta_grid: &[f64],
    n_max: usize,
) -> Result<DeltaSearch> {
    let dim = cone.dim();
    for s in steps {
        Error::check_dim(dim, s.len())?;
    }
    if !cone.is_interior(v)? {
        return Err(Error::NotInterior);
    }
    let mut grid = delta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let origin = vec![0i64; dim];
    for &delta in &grid {
        let admissible = |p: &[i64]| {
            let x: Vec<f64> = p
                .iter()
                .zip(v)
                .map(|(&a, vi)| a as f64 + delta * vi)
                .collect();
            cone.contains(&x, 0.0).unwrap_or(false)
        };
        let goal = |p: &[i64]| {
            let x: Vec<f64> = p.iter().map(|&a| a as f64).collect();
            cone.contains_strictly(&x).unwrap_or(false)
        };
        if let Some(path) = bfs_path(steps, &origin, n_max, admissible, goal) {
            return Ok(DeltaSearch::Found {
                delta,
                n0: path.len(),
                path,
            });
        }
    }
    let witness = StepMeasure::from_lattice(steps)
        .ok()
        .and_then(|m| m.check_h2prime(cone).ok())
        .and_then(|h| h.witness);
    Ok(DeltaSearch::NotFound { witness })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(d: usize) -> ConeSpec {
        ConeSpec::orthant(d).unwrap()
    }

    fn nsew() -> Vec<Lattice> {
        vec![vec![0, 1], vec![0, -1], vec![1, 0], vec![-1, 0]]
    }

    fn figure1() -> Vec<Lattice> {
        vec![vec![1, -1], vec![-1, 1], vec![-1, -1]]
    }

    #[test]
    fn nsew_small_counts() {
        let opts = EnumOptions {
            mode: EnumMode::Exact,
            threads: 1,
        };
        let s = count_walks(&nsew(), None, &[0, 0], &q(2), 2, opts).unwrap();
        assert_eq!(s.exact(0).unwrap(), &BigUint::from(1u32));
        assert_eq!(s.exact(1).unwrap(), &BigUint::from(2u32));
        assert_eq!(s.exact(2).unwrap(), &BigUint::from(6u32));
    }

    #[test]
    fn figure1_dies_from_origin() {
        let w = [1.0 / 3.0; 3];
        let s = count_walks(
            &figure1(),
            Some(&w),
            &[0, 0],
            &q(2),
            3,
            EnumOptions::default(),
        )
        .unwrap();
        assert_eq!(s.survival(0), 1.0);
        assert_eq!(s.survival(1), 0.0);
    }

    #[test]
    fn start_outside_rejected() {
        assert!(matches!(
            count_walks(&nsew(), None, &[-1, 0], &q(2), 2, EnumOptions::default()),
            Err(Error::StartOutsideCone(_))
        ));
        let h = ConeSpec::halfspace(vec![1.0, 0.0]).unwrap();
        assert!(count_walks(&nsew(), None, &[0, 0], &h, 2, EnumOptions::default()).is_err());
    }

    #[test]
    fn endpoint_counts_binomial() {
        let ne = vec![vec![1, 0], vec![0, 1]];
        let m = end_point_counts(&ne, &[0, 0], &q(2), 2).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[&vec![2, 0]], BigUint::from(1u32));
        assert_eq!(m[&vec![1, 1]], BigUint::from(2u32));
        assert_eq!(m[&vec![0, 2]], BigUint::from(1u32));
        let m0 = end_point_counts(&ne, &[3, 1], &q(2), 0).unwrap();
        assert_eq!(
            m0.into_iter().collect::<Vec<_>>(),
            vec![(vec![3, 1], BigUint::from(1u32))]
        );
    }

    #[test]
    fn exact_and_scaled_agree() {
        let steps = vec![
            vec![1, 0],
            vec![-1, 0],
            vec![0, 1],
            vec![0, -1],
            vec![-1, -1],
        ];
        let exact = count_walks(
            &steps,
            None,
            &[1, 0],
            &q(2),
            60,
            EnumOptions {
                mode: EnumMode::Exact,
                threads: 1,
            },
        )
        .unwrap();
        let scaled = count_walks(&steps, None, &[1, 0], &q(2), 60, EnumOptions::default()).unwrap();
        for n in 0..=60 {
            let a = exact.values[n].ln();
            let b = scaled.values[n].ln();
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "n={n}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn threads_do_not_change_layers() {
        let steps = vec![
            vec![1, 0],
            vec![-1, 0],
            vec![0, 1],
            vec![0, -1],
            vec![-1, -1],
        ];
        let one = count_walks(&steps, None, &[2, 2], &q(2), 80, EnumOptions::default()).unwrap();
        let four = count_walks(
            &steps,
            None,
            &[2, 2],
            &q(2),
            80,
            EnumOptions {
                mode: EnumMode::LogScaled,
                threads: 4,
            },
        )
        .unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn dying_walk_has_rate_zero() {
        let s = count_walks(
            &[vec![-1, -1]],
            None,
            &[5, 5],
            &q(2),
            20,
            EnumOptions::default(),
        )
        .unwrap();
        assert!(s.survival(5) > 0.0);
        assert_eq!(s.survival(6), 0.0);
        let r = estimate_rate(&s).unwrap();
        assert!(r.died_out);
        assert_eq!(r.extrapolated, 0.0);
    }

    #[test]
    fn drift_in_cone_rate_near_one() {
        let s = count_walks(&nsew(), None, &[1, 1], &q(2), 400, EnumOptions::default()).unwrap();
        let r = estimate_rate(&s).unwrap();
        assert!((0.995..=1.0).contains(&r.extrapolated), "{r:?}");
        assert!((r.growth_extrapolated - 4.0 * r.extrapolated).abs() < 1e-12);
    }

    #[test]
    fn halfspace_model_detects_period_two() {
        let w = [1.0 / 3.0; 3];
        let s = count_walks(
            &figure1(),
            Some(&w),
            &[1, 1],
            &q(2),
            200,
            EnumOptions::default(),
        )
        .unwrap();
        let r = estimate_rate(&s).unwrap();
        assert_eq!(r.period, 2);
        assert!((r.extrapolated - 2f64.sqrt() / 3.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn ln_of_huge_integer() {
        let v = BigUint::from(3u32).pow(2000);
        assert!((ln_biguint(&v) - 2000.0 * 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn cramer_at_zero_is_exact() {
        let m = StepMeasure::with_weights(vec![vec![1.0], vec![-1.0]], vec![0.25, 0.75]).unwrap();
        assert_eq!(
            cramer_identity_check(&m, &[0.0], &[2], &q(1), 20).unwrap(),
            0.0
        );
    }

    #[test]
    fn cramer_one_dimensional() {
        let m = StepMeasure::with_weights(vec![vec![1.0], vec![-1.0]], vec![0.25, 0.75]).unwrap();
        let err = cramer_identity_check(&m, &[0.5 * 3f64.ln()], &[2], &q(1), 20).unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn delta_examples() {
        let v = [1.0, 1.0];
        match find_delta(
            &[vec![0, 1], vec![1, 0], vec![0, -1], vec![-1, 0]],
            &q(2),
            &v,
            &default_delta_grid(),
            12,
        )
        .unwrap()
        {
            DeltaSearch::Found { delta, n0, path } => {
                assert_eq!(delta, 0.0);
                assert_eq!(n0, 2);
                assert_eq!(path, vec![vec![0, 1], vec![1, 0]]);
            }
            other => panic!("{other:?}"),
        }
        match find_delta(&[vec![1, 1]], &q(2), &v, &default_delta_grid(), 12).unwrap() {
            DeltaSearch::Found { delta, n0, .. } => assert_eq!((delta, n0), (0.0, 1)),
            other => panic!("{other:?}"),
        }
        match find_delta(&figure1(), &q(2), &v, &default_delta_grid(), 12).unwrap() {
            DeltaSearch::NotFound { witness } => {
                let w = witness.unwrap();
                assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delta_needs_shift_for_late_entry() {
        // Must step west before going north-east twice.
        let steps = vec![vec![-1, 0], vec![2, 1]];
        match find_delta(&steps, &q(2), &[1.0, 1.0], &default_delta_grid(), 12).unwrap() {
            DeltaSearch::Found { delta, .. } => assert_eq!(delta, 0.0),
            other => panic!("{other:?}"),
        }
        let steps = vec![vec![-1, 1], vec![1, -1], vec![1, 1]];
        // (1,1) reaches the interior immediately.
        assert!(matches!(
            find_delta(&steps, &q(2), &[1.0, 1.0], &default_delta_grid(), 12).unwrap(),
            DeltaSearch::Found { n0: 1, .. }
        ));
        let steps = vec![vec![-1, 2], vec![2, -1], vec![-1, -1]];
        match find_delta(&steps, &q(2), &[1.0, 1.0], &default_delta_grid(), 12).unwrap() {
            DeltaSearch::Found { delta, n0, .. } => {
                assert_eq!(delta, 1.0);
                assert_eq!(n0, 2);
            }
            other => panic!("{other:?}"),
        }
    }
}
