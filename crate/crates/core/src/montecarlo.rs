//! Seeded simulation of cone exit times: plain survival, importance sampling
//! under the exponential tilt, and survival inside a diffusive band.
//!
//! Trajectory `t` draws from its own ChaCha stream `(seed, t)`, so results
//! do not depend on the number of threads or the order trials are run in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::laplace::LaplaceModel;
use crate::linalg::{dot, pairwise_sum};
use crate::solver::RateCertificate;
use crate::step::{Mode, StepMeasure};

pub const DEFAULT_BAND_EPSILON: f64 = 0.01;
/// Tolerance for "drift in cone" and "v orthogonal to drift".
pub const BAND_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    /// Simulate under the tilted law at this point and reweight.
    pub tilt: Option<Vec<f64>>,
    pub threads: usize,
}

impl SimConfig {
    pub fn new(seed: u64, trials: usize, horizon: usize) -> Self {
        SimConfig {
            seed,
            trials,
            horizon,
            tilt: None,
            threads: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        if xs.len() < 2 {
            return McEstimate {
                estimate: mean,
                stderr: 0.0,
            };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0);
        McEstimate {
            estimate: mean,
            stderr: (var / n).sqrt(),
        }
    }
}

struct Sampler {
    steps: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(m: &StepMeasure) -> Self {
        let mut acc = 0.0;
        let cumulative = m
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Sampler {
            steps: m.steps().to_vec(),
            cumulative,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &[f64] {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let i = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.steps.len() - 1);
        &self.steps[i]
    }
}

/// End state of one trajectory at a checkpoint: `None` once it has left the cone.
type Snapshot = Option<Vec<f64>>;

fn trajectory_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Runs all trials and records each trajectory's position at every
/// checkpoint (sorted, the last one being the horizon).
fn run(
    sampler: &Sampler,
    start: &[f64],
    cone: &ConeSpec,
    seed: u64,
    trials: usize,
    checkpoints: &[usize],
    threads: usize,
) -> Result<Vec<Vec<Snapshot>>> {
    let one = |t: usize| -> Vec<Snapshot> {
        let mut rng = trajectory_rng(seed, t);
        let mut x = start.to_vec();
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut alive = true;
        let mut n = 0usize;
        for &c in checkpoints {
            while alive && n < c {
                let s = sampler.draw(&mut rng);
                for (xi, si) in x.iter_mut().zip(s) {
                    *xi += si;
                }
                n += 1;
                alive = cone.contains(&x, 0.0).unwrap_or(false);
            }
            out.push(alive.then(|| x.clone()));
        }
        out
    };
    if threads <= 1 {
        return Ok((0..trials).map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..trials).into_par_iter().map(one).collect()))
}

fn check_inputs(m: &StepMeasure, start: &[f64], cone: &ConeSpec) -> Result<()> {
    if m.mode() != Mode::Probability {
        return Err(Error::CountingMode);
    }
    Error::check_dim(m.dim(), start.len())?;
    Error::check_dim(m.dim(), cone.dim())
}

/// Sampling law plus the per-trajectory log weight
/// `n ln L(z) + <z, start> - <z, S_n>` (identically zero without a tilt).
struct Scheme {
    sampler: Sampler,
    tilt: Option<(Vec<f64>, f64)>,
}

impl Scheme {
    fn new(m: &StepMeasure, tilt: Option<&[f64]>) -> Result<Self> {
        match tilt {
            Some(z) if z.iter().any(|&v| v != 0.0) => {
                Error::check_dim(m.dim(), z.len())?;
                let ln_l = LaplaceModel::finite(m.clone())?.value(z)?.ln();
                Ok(Scheme {
                    sampler: Sampler::new(&m.tilt(z)?),
                    tilt: Some((z.to_vec(), ln_l)),
                })
            }
            _ => Ok(Scheme {
                sampler: Sampler::new(m),
                tilt: None,
            }),
        }
    }

    fn weight(&self, n: usize, start: &[f64], end: &[f64]) -> f64 {
        match &self.tilt {
            None => 1.0,
            Some((z, ln_l)) => (n as f64 * ln_l + dot(z, start) - dot(z, end)).exp(),
        }
    }
}

/// `P[τ > n]` estimates at every checkpoint from one set of trajectories.
pub fn survival_profile(
    m: &StepMeasure,
    start: &[f64],
    cone: &ConeSpec,
    config: &SimConfig,
    checkpoints: &[usize],
) -> Result<Vec<McEstimate>> {
    config.validate()?;
    check_inputs(m, start, cone)?;
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    if cps.is_empty() || cps[0] == 0 {
        return Err(Error::InvalidArgument(
            "checkpoints must be positive".into(),
        ));
    }
    let scheme = Scheme::new(m, config.tilt.as_deref())?;
    let snaps = run(
        &scheme.sampler,
        start,
        cone,
        config.seed,
        config.trials,
        &cps,
        config.threads,
    )?;
    let mut by_cp = Vec::with_capacity(cps.len());
    for (k, &n) in cps.iter().enumerate() {
        let xs: Vec<f64> = snaps
            .iter()
            .map(|s| {
                s[k].as_ref()
                    .map_or(0.0, |end| scheme.weight(n, start, end))
            })
            .collect();
        by_cp.push(McEstimate::from_samples(&xs));
    }
    // Report in the caller's order.
    Ok(checkpoints
        .iter()
        .map(|n| by_cp[cps.binary_search(n).unwrap()])
        .collect())
}

/// `P^start[τ > horizon]`; honors `config.tilt` when set.
pub fn simulate_survival(
    m: &StepMeasure,
    start: &[f64],
    cone: &ConeSpec,
    config: &SimConfig,
) -> Result<McEstimate> {
    Ok(survival_profile(m, start, cone, config, &[config.horizon])?[0])
}

/// Importance-sampling estimate of `P[τ > n]` under the tilt at `x*`:
/// `ρ^n e^{<x*, start>} E_{x*}[e^{-<x*, S_n>}; τ > n]`.
pub fn tilted_survival(
    m: &StepMeasure,
    cert: &RateCertificate,
    start: &[f64],
    cone: &ConeSpec,
    config: &SimConfig,
) -> Result<McEstimate> {
    let mut cfg = config.clone();
    cfg.tilt = Some(cert.x_star.clone());
    simulate_survival(m, start, cone, &cfg)
}

/// `4 sqrt(λ_max(Γ))` for the covariance `Γ` of the increments.
pub fn default_band_alpha(m: &StepMeasure) -> Result<f64> {
    let cov = m.covariance()?;
    let top = cov
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    Ok(4.0 * top.sqrt())
}

fn check_band(m: &StepMeasure, cone: &ConeSpec, v: &[f64], alpha: f64) -> Result<()> {
    Error::check_dim(m.dim(), v.len())?;
    let mean = m.mean()?;
    if !cone.contains(&mean, BAND_DRIFT_TOL)? {
        return Err(Error::InvalidArgument("drift not in cone".into()));
    }
    if dot(v, &mean).abs() > BAND_DRIFT_TOL {
        return Err(Error::InvalidArgument("v not orthogonal to drift".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(
            "alpha must be a nonnegative number".into(),
        ));
    }
    Ok(())
}

/// `P^start[τ > n, |<v, S_n>| <= α √n]` at `n = config.horizon`.
pub fn band_survival(
    m: &StepMeasure,
    start: &[f64],
    cone: &ConeSpec,
    v: &[f64],
    alpha: f64,
    config: &SimConfig,
) -> Result<McEstimate> {
    let check = band_decay_check(
        m,
        start,
        cone,
        v,
        &[alpha],
        config,
        &[config.horizon],
        DEFAULT_BAND_EPSILON,
    )?;
    Ok(check.bands[0].estimates[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub alpha: f64,
    pub estimates: Vec<McEstimate>,
    /// `exp` of the least-squares slope of `ln estimate` against `n`.
    pub fitted_rate: f64,
    pub passes: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub horizons: Vec<usize>,
    /// Whether the steps span the space; without it the check is degenerate.
    pub h1: bool,
    pub epsilon: f64,
    pub bands: Vec<BandFit>,
}

fn fit_rate(ns: &[usize], ys: &[f64]) -> f64 {
    if ys.iter().any(|&y| y <= 0.0) {
        return 0.0;
    }
    if ns.len() < 2 {
        return 1.0;
    }
    let k = ns.len() as f64;
    let mx = ns.iter().map(|&n| n as f64).sum::<f64>() / k;
    let my = ys.iter().map(|y| y.ln()).sum::<f64>() / k;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&n, y) in ns.iter().zip(ys) {
        let dx = n as f64 - mx;
        sxx += dx * dx;
        sxy += dx * (y.ln() - my);
    }
    (sxy / sxx).exp()
}

/// Band survival for several widths from one set of trajectories, with a
/// log-linear fit over `horizons`. Passing means the fitted per-step rate
/// is at least `1 - epsilon`; this is consistency with non-exponential
/// decay at the simulated lengths, not a proof of it.
#[allow(clippy::too_many_arguments)]
pub fn band_decay_check(
    m: &StepMeasure,
    start: &[f64],
    cone: &ConeSpec,
    v: &[f64],
    alphas: &[f64],
    config: &SimConfig,
    horizons: &[usize],
    epsilon: f64,
) -> Result<BandCheck> {
    config.validate()?;
    check_inputs(m, start, cone)?;
    for &a in alphas {
        check_band(m, cone, v, a)?;
    }
    let mut ns = horizons.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::InvalidArgument("horizons must be positive".into()));
    }
    let sampler = Sampler::new(m);
    let snaps = run(
        &sampler,
        start,
        cone,
        config.seed,
        config.trials,
        &ns,
        config.threads,
    )?;
    let bands = alphas
        .iter()
        .map(|&alpha| {
            let estimates: Vec<McEstimate> = ns
                .iter()
                .enumerate()
                .map(|(k, &n)| {
                    let bound = alpha * (n as f64).sqrt();
                    let xs: Vec<f64> = snaps
                        .iter()
                        .map(|s| match &s[k] {
                            Some(x) if dot(v, x).abs() <= bound => 1.0,
                            _ => 0.0,
                        })
                        .collect();
                    McEstimate::from_samples(&xs)
                })
                .collect();
            let ys: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
            let fitted_rate = fit_rate(&ns, &ys);
            let flag = (alpha == 0.0 && v.iter().any(|&x| x != 0.0))
                .then(|| "alpha below band threshold".to_string());
            BandFit {
                alpha,
                estimates,
                fitted_rate,
                passes: fitted_rate >= 1.0 - epsilon,
                flag,
            }
        })
        .collect();
    Ok(BandCheck {
        horizons: ns,
        h1: m.check_h1(),
        epsilon,
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{count_walks, EnumOptions};
    use crate::solver::{minimize_on_dual, SolverOptions};

    fn q(d: usize) -> ConeSpec {
        ConeSpec::orthant(d).unwrap()
    }

    fn d1() -> StepMeasure {
        StepMeasure::with_weights(vec![vec![1.0], vec![-1.0]], vec![0.25, 0.75]).unwrap()
    }

    fn dp_truth(start: i64, n: usize) -> f64 {
        count_walks(
            &[vec![1], vec![-1]],
            Some(&[0.25, 0.75]),
            &[start],
            &q(1),
            n,
            EnumOptions::default(),
        )
        .unwrap()
        .survival(n)
    }

    #[test]
    fn trivial_models() {
        let up = StepMeasure::from_step_set(vec![vec![1.0, 1.0]]).unwrap();
        let e = simulate_survival(&up, &[0.0, 3.0], &q(2), &SimConfig::new(1, 100, 20)).unwrap();
        assert_eq!((e.estimate, e.stderr), (1.0, 0.0));
        let down = StepMeasure::from_step_set(vec![vec![-1.0, -1.0]]).unwrap();
        let e = simulate_survival(&down, &[2.0, 2.0], &q(2), &SimConfig::new(1, 100, 5)).unwrap();
        assert_eq!(e.estimate, 0.0);
    }

    #[test]
    fn plain_matches_dp() {
        let e = simulate_survival(&d1(), &[5.0], &q(1), &SimConfig::new(7, 100_000, 50)).unwrap();
        let truth = dp_truth(5, 50);
        assert!(
            (e.estimate - truth).abs() <= 4.0 * e.stderr,
            "{e:?} vs {truth}"
        );
    }

    #[test]
    fn tilted_matches_dp_with_smaller_error() {
        let m = d1();
        let cert = minimize_on_dual(
            &LaplaceModel::finite(m.clone()).unwrap(),
            &q(1),
            &SolverOptions::default(),
        )
        .unwrap();
        let trials = 200_000;
        let cfg = SimConfig::new(3, trials, 60);
        let t = tilted_survival(&m, &cert, &[3.0], &q(1), &cfg).unwrap();
        let p = simulate_survival(&m, &[3.0], &q(1), &cfg).unwrap();
        let truth = dp_truth(3, 60);
        assert!(
            (t.estimate - truth).abs() <= 4.0 * t.stderr,
            "{t:?} vs {truth}"
        );
        let plain_sd = (truth * (1.0 - truth) / trials as f64).sqrt();
        assert!(t.stderr < plain_sd, "{t:?} {truth}");
        assert!(p.stderr == 0.0 || t.stderr < p.stderr, "{t:?} {p:?}");
    }

    #[test]
    fn zero_tilt_is_plain() {
        let m = StepMeasure::from_step_set(vec![
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let mut cfg = SimConfig::new(11, 2000, 30);
        let plain = simulate_survival(&m, &[1.0, 1.0], &q(2), &cfg).unwrap();
        cfg.tilt = Some(vec![0.0, 0.0]);
        assert_eq!(
            simulate_survival(&m, &[1.0, 1.0], &q(2), &cfg).unwrap(),
            plain
        );
    }

    #[test]
    fn threads_do_not_change_results() {
        let mut cfg = SimConfig::new(5, 3000, 40);
        let a = simulate_survival(&d1(), &[2.0], &q(1), &cfg).unwrap();
        cfg.threads = 4;
        assert_eq!(simulate_survival(&d1(), &[2.0], &q(1), &cfg).unwrap(), a);
    }

    #[test]
    fn band_examples() {
        let up = StepMeasure::from_step_set(vec![vec![1.0, 1.0]]).unwrap();
        let e = band_survival(
            &up,
            &[0.0, 0.0],
            &q(2),
            &[1.0, -1.0],
            0.5,
            &SimConfig::new(0, 50, 30),
        )
        .unwrap();
        assert_eq!(e.estimate, 1.0);

        let ne = StepMeasure::from_step_set(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = band_decay_check(
            &ne,
            &[0.0, 0.0],
            &q(2),
            &[1.0, -1.0],
            &[0.0, 4.0],
            &SimConfig::new(0, 2000, 400),
            &[100, 200, 300, 400],
            DEFAULT_BAND_EPSILON,
        )
        .unwrap();
        assert!(c.bands[0].flag.is_some());
        assert!(c.bands[0].estimates[3].estimate < 0.1);
        assert!(c.bands[1].passes, "{:?}", c.bands[1]);
    }

    #[test]
    fn band_preconditions() {
        let nsew = StepMeasure::from_step_set(vec![
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let cfg = SimConfig::new(0, 10, 10);
        assert!(band_survival(&d1(), &[1.0], &q(1), &[1.0], 1.0, &cfg).is_err());
        assert!(band_survival(&nsew, &[1.0, 1.0], &q(2), &[1.0, -1.0], -1.0, &cfg).is_err());
        let ne = StepMeasure::from_step_set(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(band_survival(&ne, &[0.0, 0.0], &q(2), &[1.0, 0.0], 1.0, &cfg).is_err());
        assert!((default_band_alpha(&ne).unwrap() - 4.0 * 0.5f64.sqrt()).abs() < 1e-12);
    }
}
