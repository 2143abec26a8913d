//! Acceptance criteria, one line per criterion:
//! `ACCEPT <id> <name>: PASS|FAIL (<detail>; <time> / <budget>)`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use conewalk::corpus::{planar_small_step_models, reweighted, spatial_models, CorpusModel};
use conewalk::enumerate::{
    count_walks, cramer_identity_check, default_delta_grid, estimate_rate, find_delta, DeltaSearch,
    EnumOptions,
};
use conewalk::linalg::{dot, norm};
use conewalk::montecarlo::{band_decay_check, SimConfig};
use conewalk::solver::{
    brownian_rate, growth_constant, hyperplane_scan, minimize_on_dual, SolverOptions,
};
use conewalk::step::default_h3_depth;
use conewalk::{
    check_h3, halfspace_model, halfspace_rate, ConeSpec, Direction, LaplaceModel, StepMeasure,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> (bool, String);

fn orthant(d: usize) -> ConeSpec {
    ConeSpec::orthant(d).unwrap()
}

fn certificate(m: &StepMeasure) -> conewalk::RateCertificate {
    let model = LaplaceModel::finite(m.clone()).unwrap();
    minimize_on_dual(&model, &orthant(m.dim()), &SolverOptions::default()).unwrap()
}

fn dp_rate(m: &StepMeasure, start: &[i64], n: usize) -> f64 {
    let s = count_walks(
        &m.lattice_steps().unwrap(),
        Some(m.weights()),
        start,
        &orthant(m.dim()),
        n,
        EnumOptions::default(),
    )
    .unwrap();
    estimate_rate(&s).unwrap().extrapolated
}

fn proper_planar() -> Vec<CorpusModel> {
    planar_small_step_models()
        .unwrap()
        .into_iter()
        .filter(|m| m.proper)
        .collect()
}

fn proper_spatial() -> Vec<CorpusModel> {
    spatial_models(17, 10, |m| m.proper).unwrap()
}

/// Ten proper planar models with seeded non-uniform weights.
fn weighted_sample() -> Vec<StepMeasure> {
    proper_planar()
        .iter()
        .step_by(9)
        .take(10)
        .enumerate()
        .map(|(i, m)| reweighted(&m.measure, i as u64).unwrap())
        .collect()
}

fn c1_one_dimensional() -> (bool, String) {
    let m = StepMeasure::with_weights(vec![vec![1.0], vec![-1.0]], vec![0.25, 0.75]).unwrap();
    let rho = certificate(&m).rho;
    let expect = 3f64.sqrt() / 2.0;
    let dp = dp_rate(&m, &[0], 2000);
    let (e1, e2) = ((rho - expect).abs(), (dp - rho).abs());
    (
        e1 <= 1e-10 && e2 <= 5e-3,
        format!("|rho-sqrt3/2|={e1:.2e}, |dp-rho|={e2:.2e}"),
    )
}

fn c2_halfspace_family() -> (bool, String) {
    let m = halfspace_model(1.0 / 3.0).unwrap();
    let r11 = dp_rate(&m, &[1, 1], 1500);
    let r22 = dp_rate(&m, &[2, 2], 1500);
    let r31 = dp_rate(&m, &[3, 1], 1500);
    let e1 = (r11 - 2f64.sqrt() / 3.0).abs();
    let spread = (r22 - r31).abs();
    let factor = (PI / 6.0).cos() / (PI / 4.0).cos();
    let e3 = (r22 / r11 - factor).abs();
    let closed = (halfspace_rate(1.0 / 3.0, 2).unwrap() - r22).abs();
    (
        e1 <= 5e-3 && spread <= 5e-3 && e3 <= 1e-2,
        format!("|dp-sqrt2/3|={e1:.2e}, spread={spread:.2e}, factor err={e3:.2e}, N=2 closed-form err={closed:.2e}"),
    )
}

fn c3_kkt_suite() -> (bool, String) {
    let mut models: Vec<StepMeasure> = proper_planar().into_iter().map(|m| m.measure).collect();
    let planar = models.len();
    models.extend(proper_spatial().into_iter().map(|m| m.measure));
    let spatial = models.len() - planar;
    let (mut mem, mut orth, mut tmem, mut torth) = (0f64, 0f64, 0f64, 0f64);
    for m in &models {
        let c = certificate(m);
        mem = mem.max(c.kkt_membership_residual);
        orth = orth.max(c.scaled_orthogonality());
        let drift = m.tilt(&c.x_star).unwrap().mean().unwrap();
        tmem = tmem.max(orthant(m.dim()).violation(&drift).unwrap());
        torth = torth.max(dot(&drift, &c.x_star).abs());
    }
    let worst = mem.max(orth).max(tmem).max(torth);
    (
        planar >= 50 && spatial >= 10 && worst <= 1e-8,
        format!("{planar} planar + {spatial} spatial; membership {mem:.1e}, orthogonality {orth:.1e}, tilted drift {tmem:.1e}/{torth:.1e}"),
    )
}

fn c4_brownian() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut err, mut orth) = (0f64, 0f64);
    for i in 0..100 {
        let d = if i % 2 == 0 { 2 } else { 3 };
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = orthant(d);
        let closed = brownian_rate(&a, &q).unwrap();
        let cert = minimize_on_dual(
            &LaplaceModel::gaussian(a.clone()).unwrap(),
            &q,
            &SolverOptions::default(),
        )
        .unwrap();
        err = err.max((cert.rho - closed).abs());
        let (p, r) = q.moreau_decompose(&a).unwrap();
        orth = orth.max(dot(&p, &r).abs());
    }
    (
        err <= 1e-9 && orth <= 1e-10,
        format!("max |rho-closed|={err:.1e}, max Moreau <p,q>={orth:.1e}"),
    )
}

fn c5_hyperplane_scan() -> (bool, String) {
    let mut worst = 0f64;
    let models = proper_planar();
    for m in models.iter().step_by(9).take(10) {
        let steps = m.measure.lattice_steps().unwrap();
        let s = hyperplane_scan(&steps, 2001).unwrap();
        let k = growth_constant(&steps).unwrap();
        worst = worst.max((s.k_min - k.value).abs());
    }
    (
        worst <= 1e-3,
        format!("max |scan-K|={worst:.2e} over 10 models"),
    )
}

fn c6_cramer() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for m in weighted_sample() {
        let xs = certificate(&m).x_star;
        let mut zs = vec![vec![0.0, 0.0], xs];
        for _ in 0..3 {
            zs.push(vec![rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)]);
        }
        for z in zs {
            worst = worst.max(cramer_identity_check(&m, &z, &[1, 1], &orthant(2), 20).unwrap());
        }
    }
    (
        worst <= 1e-9,
        format!("max relative error {worst:.2e} over 10 models x 5 points"),
    )
}

fn c7_upper_bound() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for m in weighted_sample() {
        let dp = dp_rate(&m, &[1, 1], 300);
        let model = LaplaceModel::finite(m.clone()).unwrap();
        for _ in 0..100 {
            let z = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
            worst = worst.max(dp - model.value(&z).unwrap());
        }
    }
    (
        worst <= 5e-3,
        format!("max (dp - L(z)) = {worst:.2e} over 10 models x 100 points"),
    )
}

fn c8_dichotomy() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let models = planar_small_step_models().unwrap();
    let (mut agree, mut worst_limit) = (0usize, 0f64);
    let mut pairs = 0usize;
    while pairs < 200 {
        let cm = &models[rng.random_range(0..models.len())];
        let steps = cm.measure.steps();
        // Half the directions lie on some step's orthogonal line, the rest
        // keep every |<u, s>| >= 0.35 so that t = 40 resolves the limit.
        let u: Vec<f64> = if pairs.is_multiple_of(2) {
            let s = &steps[rng.random_range(0..steps.len())];
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let n = norm(s);
            vec![-sign * s[1] / n, sign * s[0] / n]
        } else {
            let a: f64 = rng.random_range(0.0..2.0 * PI);
            let u = vec![a.cos(), a.sin()];
            if steps.iter().any(|s| dot(&u, s).abs() < 0.35) {
                continue;
            }
            u
        };
        pairs += 1;
        let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let model = LaplaceModel::finite(cm.measure.clone()).unwrap();
        let at = |t: f64| model.value(&[x[0] + t * u[0], x[1] + t * u[1]]).unwrap();
        let (l10, l20, l40) = (at(10.0), at(20.0), at(40.0));
        let sampled_diverges = l20 >= 2.0 * l10 && l40 >= 2.0 * l20;
        match model.classify_direction(&u, &x).unwrap() {
            Direction::Diverges if sampled_diverges => agree += 1,
            Direction::Limit(l) if !sampled_diverges => {
                let e = (l40 - l).abs();
                worst_limit = worst_limit.max(e);
                if e <= 1e-6 {
                    agree += 1;
                }
            }
            _ => {}
        }
    }
    (
        agree == pairs,
        format!("{agree}/{pairs} agree, worst limit gap {worst_limit:.1e}"),
    )
}

/// Independent oracle for the improper case: some direction of the orthant
/// along which no step has a positive component. Extreme rays of that set
/// are cross products of small vectors, so entries in {0, 1, 2} suffice.
fn has_flat_direction(m: &StepMeasure) -> bool {
    let d = m.dim();
    let model = LaplaceModel::finite(m.clone()).unwrap();
    let zero = vec![0.0; d];
    (1..3usize.pow(d as u32)).any(|code| {
        let mut c = code;
        let u: Vec<f64> = (0..d)
            .map(|_| {
                let v = (c % 3) as f64;
                c /= 3;
                v
            })
            .collect();
        let n = norm(&u);
        let u: Vec<f64> = u.iter().map(|v| v / n).collect();
        matches!(
            model.classify_direction(&u, &zero).unwrap(),
            Direction::Limit(_)
        )
    })
}

fn c9_global_min_iff_h2prime() -> (bool, String) {
    let mut all: Vec<CorpusModel> = planar_small_step_models()
        .unwrap()
        .into_iter()
        .filter(|m| m.h1)
        .collect();
    all.extend(spatial_models(19, 10, |m| m.h1 && !m.proper).unwrap());
    all.extend(proper_spatial());
    let improper = all.iter().filter(|m| !m.proper).count();
    let mut agree = 0;
    for cm in &all {
        let q = orthant(cm.measure.dim());
        let lemma = LaplaceModel::finite(cm.measure.clone())
            .unwrap()
            .has_global_min_on_cone(&q)
            .unwrap();
        let h2 = cm.measure.check_h2prime(&q).unwrap().proper;
        let oracle = !has_flat_direction(&cm.measure);
        if lemma == h2 && h2 == oracle {
            agree += 1;
        }
    }
    (
        improper >= 20 && agree == all.len(),
        format!("{agree}/{} agree ({improper} improper)", all.len()),
    )
}

fn c10_band() -> (bool, String) {
    let m = StepMeasure::from_step_set(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let horizons: Vec<usize> = (1..=8).map(|k| 100 * k).collect();
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(8);
    let mut rates = Vec::new();
    for seed in 0..5 {
        let cfg = SimConfig {
            seed,
            trials: 200_000,
            horizon: 800,
            tilt: None,
            threads,
        };
        let c = band_decay_check(
            &m,
            &[0.0, 0.0],
            &orthant(2),
            &[1.0, -1.0],
            &[4.0],
            &cfg,
            &horizons,
            0.01,
        )
        .unwrap();
        rates.push(c.bands[0].fitted_rate);
    }
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    (
        min >= 0.99,
        format!("min fitted rate {min:.6} over seeds 0..4"),
    )
}

fn c11_delta_search() -> (bool, String) {
    let v = [1.0, 1.0];
    let mut checked = 0;
    let mut ok = 0;
    for cm in proper_planar() {
        let steps = cm.measure.lattice_steps().unwrap();
        if !check_h3(&steps, default_h3_depth(&steps)).unwrap().ok {
            continue;
        }
        checked += 1;
        if let DeltaSearch::Found { delta, path, .. } =
            find_delta(&steps, &orthant(2), &v, &default_delta_grid(), 12).unwrap()
        {
            if delta == 0.0 && !path.is_empty() {
                ok += 1;
            }
        }
    }
    let fig = halfspace_model(1.0 / 3.0).unwrap().lattice_steps().unwrap();
    let improper_ok = match find_delta(&fig, &orthant(2), &v, &default_delta_grid(), 12).unwrap() {
        DeltaSearch::NotFound { witness: Some(w) } => {
            (w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12
        }
        _ => false,
    };
    (
        checked > 0 && ok == checked && improper_ok,
        format!("{ok}/{checked} delta=0 with path; improper model not_found with witness: {improper_ok}"),
    )
}

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn c12_determinism() -> (bool, String) {
    let runs: Vec<Vec<String>> = vec![
        vec!["rate", "--steps", &data("nsew_sw.json")],
        vec![
            "enumerate",
            "--steps",
            &data("nsew_sw.json"),
            "--start",
            "1,1",
            "--n",
            "60",
        ],
        vec![
            "verify",
            "--steps",
            &data("nsew_sw.json"),
            "--start",
            "1,1",
            "--n",
            "200",
            "--trials",
            "5000",
            "--seed",
            "3",
        ],
        vec![
            "verify",
            "--steps",
            &data("drift_down_1d.json"),
            "--start",
            "3",
            "--n",
            "400",
            "--threads",
            "3",
        ],
        vec![
            "verify",
            "--steps",
            &data("halfspace_family.json"),
            "--start",
            "1,1",
            "--n",
            "300",
        ],
        vec!["check", "--steps", &data("nsew.json")],
        vec![
            "halfspace",
            "--p",
            "0.3333333333333333",
            "--N",
            "1",
            "--n",
            "300",
        ],
        vec!["brownian", "--drift", "-1,0.5", "--cone", "orthant"],
        vec!["scan", "--steps", &data("nsew_sw.json"), "--grid", "201"],
        vec![
            "band",
            "--steps",
            &data("north_east.json"),
            "--start",
            "0,0",
            "--v",
            "1,-1",
            "--trials",
            "2000",
            "--horizons",
            "50,100",
            "--seed",
            "9",
            "--threads",
            "2",
        ],
    ]
    .into_iter()
    .map(|r| r.into_iter().map(String::from).collect())
    .collect();
    let bin = env!("CARGO_BIN_EXE_conewalk");
    let mut same = 0;
    let mut bad = Vec::new();
    for args in &runs {
        let run = || {
            Command::new(bin)
                .args(args)
                .arg("--json")
                .output()
                .expect("binary runs")
        };
        let (a, b) = (run(), run());
        if a.stdout == b.stdout && !a.stdout.is_empty() && a.status.code() == b.status.code() {
            same += 1;
        } else {
            bad.push(args[0].clone());
        }
    }
    (
        same == runs.len(),
        format!(
            "{same}/{} commands byte-identical{}",
            runs.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; differ: {bad:?}")
            }
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, f64, Check); 12] = [
        (1, "one-dimensional oracle", 5.0, c1_one_dimensional),
        (2, "half-space family", 60.0, c2_halfspace_family),
        (3, "KKT certificates", 10.0, c3_kkt_suite),
        (4, "Brownian cross-check", 5.0, c4_brownian),
        (
            5,
            "hyperplane scan vs growth constant",
            10.0,
            c5_hyperplane_scan,
        ),
        (6, "Cramer identity", 10.0, c6_cramer),
        (7, "upper-bound dominance", 10.0, c7_upper_bound),
        (8, "direction dichotomy", 5.0, c8_dichotomy),
        (9, "global minimum iff H2'", 5.0, c9_global_min_iff_h2prime),
        (10, "band survival signature", 120.0, c10_band),
        (11, "delta search", 5.0, c11_delta_search),
        (12, "determinism", 120.0, c12_determinism),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let pass = ok && secs < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "ACCEPT {id:>2} {name}: {} ({detail}; {secs:.2}s / {budget:.0}s)",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
