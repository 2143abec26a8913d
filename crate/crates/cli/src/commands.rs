use std::fmt::Write as _;
use std::path::Path;

use conewalk::enumerate::{
    count_walks, default_delta_grid, estimate_rate, find_delta, series_rows, EnumMode, EnumOptions,
};
use conewalk::linalg::{dot, norm, sub};
use conewalk::montecarlo::{band_decay_check, default_band_alpha, tilted_survival, SimConfig};
use conewalk::solver::{
    brownian_rate, growth_constant, hyperplane_scan, minimize_on_dual, SolverOptions,
};
use conewalk::step::default_h3_depth;
use conewalk::{
    check_h3, halfspace_verify, ConeLiteral, ConeSpec, Error, LaplaceModel, Result, StepFile,
    StepMeasure,
};
use serde_json::{json, Value};

use crate::{
    BandArgs, BrownianArgs, CheckArgs, EnumerateArgs, Global, HalfspaceArgs, ModeArg, Outcome,
    RateArgs, ScanArgs, VerifyArgs,
};

/// Agreement required between the solver and the enumerated rate.
const RATE_TOL: f64 = 5e-3;
/// Allowed distance between simulation and enumeration, in standard errors.
const MC_SIGMAS: f64 = 4.0;

fn load_steps(path: &Path) -> Result<(StepFile, StepMeasure)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let file = StepFile::parse(&text)?;
    let measure = file.to_measure()?;
    Ok((file, measure))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("{what}: cannot parse `{}`", t.trim())))
        })
        .collect()
}

fn cone_arg(s: &str, dim: usize) -> Result<(ConeLiteral, ConeSpec)> {
    let lit: ConeLiteral = s.parse()?;
    let spec = lit.resolve(dim)?;
    Ok((lit, spec))
}

fn ok(report: Value) -> Result<Outcome> {
    Ok(Outcome {
        report,
        text: None,
        exit: 0,
    })
}

pub fn rate(a: &RateArgs, _g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let (lit, cone) = cone_arg(&a.cone, measure.dim())?;
    let model = LaplaceModel::finite(measure)?;
    let opts = SolverOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        start: None,
    };
    let config = json!({
        "command": "rate",
        "steps": file,
        "cone": lit.to_string(),
        "tol": a.tol,
        "max_iter": a.max_iter,
    });
    match minimize_on_dual(&model, &cone, &opts) {
        Ok(cert) => ok(json!({
            "config": config,
            "status": "ok",
            "rho": cert.rho,
            "x_star": cert.x_star,
            "scaled_orthogonality": cert.scaled_orthogonality(),
            "certificate": cert,
        })),
        Err(Error::Improper { witness }) => Ok(Outcome {
            report: json!({
                "config": config,
                "status": "improper",
                "witness": witness,
            }),
            text: None,
            exit: 2,
        }),
        Err(e) => Err(e),
    }
}

pub fn enumerate(a: &EnumerateArgs, g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let (lit, cone) = cone_arg(&a.cone, measure.dim())?;
    let start: Vec<i64> = parse_list(&a.start, "start")?;
    let steps = measure.lattice_steps()?;
    let mode = match a.mode {
        ModeArg::Exact => EnumMode::Exact,
        ModeArg::Log => EnumMode::LogScaled,
    };
    let series = count_walks(
        &steps,
        file.weights.as_deref(),
        &start,
        &cone,
        a.n,
        EnumOptions {
            mode,
            threads: g.threads,
        },
    )?;
    let est = estimate_rate(&series)?;
    let rows = series_rows(&series, est.period);
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        for r in &rows {
            w.serialize(r)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    }
    let config = json!({
        "command": "enumerate",
        "steps": file,
        "cone": lit.to_string(),
        "start": start,
        "n": a.n,
        "mode": mode,
        "threads": g.threads,
    });
    let summary = json!({ "config": config.clone(), "model_id": series.model_id, "rate": est });
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>6}  {:>28}  {:>12}  {:>12}",
        "n", "count_or_logprob", "ratio", "extrapolated"
    );
    for r in rows.iter().skip(rows.len().saturating_sub(12)) {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.9}"));
        let _ = writeln!(
            text,
            "{:>6}  {:>28}  {:>12}  {:>12}",
            r.n,
            r.count_or_logprob,
            f(r.ratio),
            f(r.extrapolated_rate)
        );
    }
    text.push_str(&crate::render::text(&summary));
    let mut report = summary;
    report["rows"] = json!(rows);
    Ok(Outcome {
        report,
        text: Some(text),
        exit: 0,
    })
}

fn dp_rate(
    measure: &StepMeasure,
    start: &[i64],
    cone: &ConeSpec,
    n: usize,
    threads: usize,
) -> Result<f64> {
    let series = count_walks(
        &measure.lattice_steps()?,
        Some(measure.weights()),
        start,
        cone,
        n,
        EnumOptions {
            mode: EnumMode::LogScaled,
            threads,
        },
    )?;
    Ok(estimate_rate(&series)?.extrapolated)
}

pub fn verify(a: &VerifyArgs, g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let cone = ConeSpec::orthant(measure.dim())?;
    let start: Vec<i64> = parse_list(&a.start, "start")?;
    let steps = measure.lattice_steps()?;
    let model = LaplaceModel::finite(measure.clone())?;
    let mc_n = a.mc_n.min(a.n).max(1);
    let config = json!({
        "command": "verify",
        "steps": file,
        "cone": "orthant",
        "start": start,
        "n": a.n,
        "mc_n": mc_n,
        "trials": a.trials,
        "seed": g.seed,
        "threads": g.threads,
        "rate_tol": RATE_TOL,
        "mc_sigmas": MC_SIGMAS,
    });
    let cert = match minimize_on_dual(&model, &cone, &SolverOptions::default()) {
        Ok(c) => c,
        Err(Error::Improper { witness }) => {
            let diagonals = (0..3i64)
                .map(|k| {
                    let s: Vec<i64> = start.iter().map(|x| x + k).collect();
                    Ok(json!({ "start": s, "dp_rate": dp_rate(&measure, &s, &cone, a.n, g.threads)? }))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Outcome {
                report: json!({
                    "config": config,
                    "status": "inapplicable",
                    "reason": "H2' fails; the minimum over the dual cone is not attained",
                    "witness": witness,
                    "diagonal_rates": diagonals,
                }),
                text: None,
                exit: 2,
            });
        }
        Err(e) => return Err(e),
    };

    let series = count_walks(
        &steps,
        Some(measure.weights()),
        &start,
        &cone,
        a.n,
        EnumOptions {
            mode: EnumMode::LogScaled,
            threads: g.threads,
        },
    )?;
    let est = estimate_rate(&series)?;
    let rate_err = (est.extrapolated - cert.rho).abs();

    let truth = series.survival(mc_n);
    let sim = SimConfig {
        seed: g.seed,
        trials: a.trials,
        horizon: mc_n,
        tilt: None,
        threads: g.threads,
    };
    let start_f: Vec<f64> = start.iter().map(|&x| x as f64).collect();
    let mc = tilted_survival(&measure, &cert, &start_f, &cone, &sim)?;
    let mc_gap = (mc.estimate - truth).abs();
    let mc_pass = if mc.stderr > 0.0 {
        mc_gap <= MC_SIGMAS * mc.stderr
    } else {
        mc_gap <= 1e-12 * truth.max(1e-300)
    };
    let rate_pass = rate_err <= RATE_TOL;
    ok(json!({
        "config": config,
        "status": "applicable",
        "solver": {
            "rho": cert.rho,
            "x_star": cert.x_star,
            "kkt_membership_residual": cert.kkt_membership_residual,
            "scaled_orthogonality": cert.scaled_orthogonality(),
        },
        "enumeration": {
            "rate": est,
            "abs_error": rate_err,
            "pass": rate_pass,
        },
        "montecarlo": {
            "tilted_estimate": mc.estimate,
            "stderr": mc.stderr,
            "dp_survival": truth,
            "pass": mc_pass,
        },
        "pass": rate_pass && mc_pass,
    }))
}

pub fn check(a: &CheckArgs, _g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let (lit, cone) = cone_arg(&a.cone, measure.dim())?;
    let h1 = measure.check_h1();
    let h2 = measure.check_h2prime(&cone)?;
    let lattice = measure.lattice_steps().ok();
    let h3 = match (&lattice, cone.is_orthant()) {
        (Some(steps), true) => Some(check_h3(steps, default_h3_depth(steps))?),
        _ => None,
    };
    let v = match &a.v {
        Some(s) => Some(parse_list::<f64>(s, "v")?),
        None => cone.default_interior_vector(),
    };
    let delta = match (&lattice, &v) {
        (Some(steps), Some(v)) => {
            Some(find_delta(steps, &cone, v, &default_delta_grid(), a.depth)?)
        }
        _ => None,
    };
    let proper = h1 && h2.proper;
    Ok(Outcome {
        report: json!({
            "config": {
                "command": "check",
                "steps": file,
                "cone": lit.to_string(),
                "v": v,
                "depth": a.depth,
                "delta_grid": default_delta_grid(),
            },
            "h1": h1,
            "h2prime": h2,
            "h3": h3,
            "delta": delta,
            "proper": proper,
        }),
        text: None,
        exit: if proper { 0 } else { 2 },
    })
}

pub fn halfspace(a: &HalfspaceArgs, _g: &Global) -> Result<Outcome> {
    let start: Vec<i64> = match &a.start {
        Some(s) => parse_list(s, "start")?,
        None => vec![i64::from(a.big_n); 2],
    };
    let r = halfspace_verify(a.p, a.big_n, &start, a.n)?;
    ok(json!({
        "config": { "command": "halfspace", "p": a.p, "N": a.big_n, "n": a.n, "start": start },
        "result": r,
        "pass": r.abs_error <= RATE_TOL && r.diagonal_spread <= RATE_TOL,
    }))
}

pub fn brownian(a: &BrownianArgs, _g: &Global) -> Result<Outcome> {
    let drift: Vec<f64> = parse_list(&a.drift, "drift")?;
    let (lit, cone) = cone_arg(&a.cone, drift.len())?;
    let closed = brownian_rate(&drift, &cone)?;
    let cert = minimize_on_dual(
        &LaplaceModel::gaussian(drift.clone())?,
        &cone,
        &SolverOptions::default(),
    )?;
    let (p, q) = cone.moreau_decompose(&drift)?;
    let recon: Vec<f64> = p.iter().zip(&q).map(|(x, y)| x + y).collect();
    ok(json!({
        "config": { "command": "brownian", "drift": drift, "cone": lit.to_string() },
        "closed_form": closed,
        "distance": cone.distance(&drift)?,
        "solver_rho": cert.rho,
        "solver_x_star": cert.x_star,
        "abs_error": (cert.rho - closed).abs(),
        "moreau": {
            "projection": p,
            "polar_part": q,
            "orthogonality": dot(&p, &q),
            "reconstruction_error": norm(&sub(&recon, &drift)),
        },
    }))
}

pub fn scan(a: &ScanArgs, _g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let steps = measure.lattice_steps()?;
    let s = hyperplane_scan(&steps, a.grid)?;
    let k = growth_constant(&steps)?;
    ok(json!({
        "config": { "command": "scan", "steps": file, "grid": a.grid },
        "scan": s,
        "growth_constant": k.value,
        "x_star": k.certificate.x_star,
        "abs_difference": (s.k_min - k.value).abs(),
    }))
}

pub fn band(a: &BandArgs, g: &Global) -> Result<Outcome> {
    let (file, measure) = load_steps(&a.steps)?;
    let cone = ConeSpec::orthant(measure.dim())?;
    let start: Vec<f64> = parse_list(&a.start, "start")?;
    let v: Vec<f64> = parse_list(&a.v, "v")?;
    let horizons: Vec<usize> = parse_list(&a.horizons, "horizons")?;
    let scale = default_band_alpha(&measure)? / 4.0;
    let alpha = a.alpha.unwrap_or(4.0 * scale);
    let mut alphas = vec![alpha];
    alphas.extend([2.0, 4.0, 8.0].iter().map(|f| f * scale));
    let sim = SimConfig {
        seed: g.seed,
        trials: a.trials,
        horizon: *horizons.iter().max().unwrap_or(&1),
        tilt: None,
        threads: g.threads,
    };
    let check = band_decay_check(
        &measure, &start, &cone, &v, &alphas, &sim, &horizons, a.epsilon,
    )?;
    ok(json!({
        "config": {
            "command": "band",
            "steps": file,
            "cone": "orthant",
            "start": start,
            "v": v,
            "alpha": alpha,
            "trials": a.trials,
            "horizons": check.horizons,
            "epsilon": a.epsilon,
            "seed": g.seed,
            "threads": g.threads,
        },
        "h1": check.h1,
        "band": check.bands[0],
        "sensitivity": check.bands[1..],
        "note": "a passing fit is consistent with sub-exponential decay at these lengths; it does not certify the limit",
    }))
}
