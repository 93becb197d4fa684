//! Acceptance suite. Each test prints one `CRITERION k PASS|FAIL` line and asserts it.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qshape::blockenc::{BlockEnc, Operator, ResourceLedger, BASE_QUERIES};
use qshape::cli;
use qshape::estimate::{EstimatorConfig, NoiseMode};
use qshape::oracle::{agreement, oracle_for};
use qshape::poly::{Bounds, Function, Monomial, MultiPoly, Poly};
use qshape::qsvt::{normalizers, transform};
use qshape::tester::{
    build_multivariate_m, encode_grid, test_convex_first_derivative, test_convex_jensen,
    test_convex_second_derivative, test_monotone, Direction, Grid, Method, Outcome, Verdict, WeightVector,
};

fn report(k: u32, pass: bool, what: &str, detail: String) {
    println!("CRITERION {k} {}: {what} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> Poly {
    let deg = rng.random_range(0..=max_degree);
    Poly::new((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_weights(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|r| r / sum).collect()
}

fn random_multi(rng: &mut ChaCha8Rng, dim: usize, max_terms: usize, max_exp: u32) -> MultiPoly {
    let k = rng.random_range(1..=max_terms);
    let terms = (0..k)
        .map(|_| Monomial {
            coeff: rng.random_range(-1.0..1.0),
            exps: (0..dim).map(|_| rng.random_range(0..=max_exp)).collect(),
        })
        .collect();
    MultiPoly::new(dim, terms).unwrap()
}

fn run(method: Method, f: &Poly, grid: &Grid, w: &WeightVector, dir: Direction, cfg: &EstimatorConfig) -> Verdict {
    match method {
        Method::SecondDerivative => test_convex_second_derivative(f, grid, cfg),
        Method::FirstDerivative => test_convex_first_derivative(f, grid, cfg),
        Method::Monotone => test_monotone(f, grid, dir, cfg),
        Method::Jensen => test_convex_jensen(&Function::Uni(f.clone()), grid, w, cfg),
    }
    .unwrap()
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let methods = [Method::SecondDerivative, Method::FirstDerivative, Method::Jensen, Method::Monotone];
    let grids: Vec<Grid> = [8, 64, 256].iter().map(|&n| Grid::uniform(n, 1).unwrap()).collect();
    let (mut checked, mut inconclusive, mut disagreements) = (0usize, 0usize, Vec::new());
    for trial in 0..500u64 {
        let f = random_poly(&mut rng, 6);
        let dir = if trial % 2 == 0 { Direction::Increasing } else { Direction::Decreasing };
        let cfg = EstimatorConfig::new(1e-3).unwrap().with_seed(trial);
        for grid in &grids {
            let w = WeightVector::new(random_weights(&mut rng, grid.real_len()), grid).unwrap();
            for method in methods {
                let v = run(method, &f, grid, &w, dir, &cfg);
                let o = oracle_for(method, &Function::Uni(f.clone()), grid, Some(&w), dir).unwrap();
                if v.outcome == Outcome::Inconclusive {
                    inconclusive += 1;
                } else {
                    checked += 1;
                }
                if !agreement(v.outcome, o.holds) {
                    disagreements.push((trial, grid.len(), method, v.outcome));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = disagreements.is_empty() && secs < 120.0;
    report(
        1,
        pass,
        "oracle equivalence, 500 polynomials x n in {8, 64, 256} x 4 tests",
        format!(
            "{checked} decided, {inconclusive} inconclusive, {} disagreements, {secs:.1} s",
            disagreements.len()
        ),
    );
    assert!(pass, "first disagreements: {:?}", &disagreements[..disagreements.len().min(5)]);
}

#[test]
fn criterion_2_figure_examples() {
    let cfg = EstimatorConfig::new(1e-3).unwrap();
    let cubic = Function::Uni(Poly::new(vec![1.0, -2.0, 0.0, 1.0])).remap_domain(&[(0.6, 1.4)]).unwrap();
    let Function::Uni(q) = &cubic else { unreachable!() };
    let grid = Grid::uniform(64, 1).unwrap();
    let w = WeightVector::uniform(&grid);
    let convex: Vec<Outcome> = [Method::SecondDerivative, Method::FirstDerivative, Method::Jensen]
        .into_iter()
        .map(|m| run(m, q, &grid, &w, Direction::Increasing, &cfg).outcome)
        .collect();
    let quintic = Function::Uni(Poly::new(vec![0.0, 4.0, 0.0, -6.0, 0.0, 2.0]));
    let monotone_on = |b: f64| {
        let Function::Uni(g) = quintic.remap_domain(&[(0.7, b)]).unwrap() else { unreachable!() };
        run(Method::Monotone, &g, &grid, &w, Direction::Decreasing, &cfg)
    };
    let mono = monotone_on(1.25);
    let g1 = Poly::new(vec![0.0, 4.0, 0.0, -6.0, 0.0, 2.0]).derivative(1);
    println!(
        "  info: g'(1.25) = {:.4}; on [0.7, 1.24] the monotone test gives {:?}",
        g1.eval(1.25),
        monotone_on(1.24).outcome
    );
    let pass = convex.iter().all(|&o| o == Outcome::ConvexOnGrid) && mono.outcome == Outcome::MonotoneDecreasing;
    report(
        2,
        pass,
        "cubic on [0.6, 1.4] convex under three methods; quintic on [0.7, 1.25] decreasing",
        format!("cubic {convex:?}, quintic {:?} (margin {:.3e})", mono.outcome, mono.margin),
    );
    assert!(pass);
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let s = &a + a.transpose();
    let sv = s.singular_values().max();
    s * (norm / sv)
}

#[test]
fn criterion_3_transform_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts_ok = true;
    for d in 1..=10usize {
        let mut c: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
        c[d] = 0.75;
        let (p, _) = Poly::new(c).normalize_output();
        let e = BlockEnc::new(Operator::Diagonal(vec![0.3, -0.6, 0.9, 0.0]), 1.0, 1, 0.0, ResourceLedger::new())
            .unwrap();
        counts_ok &= transform(&e, &p).unwrap().ledger().get(BASE_QUERIES) == d as u64;
    }
    let n = 8;
    let (mut trials, mut violations, mut worst_ratio) = (0, 0, 0.0f64);
    for eta in [1e-4, 1e-6] {
        for _ in 0..1000 {
            let d = rng.random_range(1..=10usize);
            let mut c: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
            c[d] = rng.random_range(0.25..1.0);
            let (p, _) = Poly::new(c).normalize_output();
            let alpha = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            let spectrum: Vec<f64> = (0..n).map(|_| alpha * rng.random_range(-0.9..0.9)).collect();
            let clean = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spectrum));
            let noisy = &clean + random_symmetric(&mut rng, n, eta);
            let exact = BlockEnc::new(Operator::Dense(clean), alpha, 1, 0.0, ResourceLedger::new()).unwrap();
            let perturbed = BlockEnc::new(Operator::Dense(noisy), alpha, 1, eta, ResourceLedger::new()).unwrap();
            let a = transform(&exact, &p).unwrap();
            let b = transform(&perturbed, &p).unwrap();
            let deviation = b.op().distance(a.op()).unwrap();
            let bound = 4.0 * d as f64 * (eta / alpha).sqrt();
            trials += 1;
            worst_ratio = worst_ratio.max(deviation / bound);
            if deviation > bound || (b.eps() - bound).abs() > 1e-15 * bound.max(1.0) {
                violations += 1;
            }
        }
    }
    let pass = counts_ok && violations == 0;
    report(
        3,
        pass,
        "transform logs d base queries for d = 1..10; noisy deviation within 4d sqrt(eta/alpha)",
        format!("counts ok: {counts_ok}, {trials} noisy trials, {violations} violations, worst deviation/bound {worst_ratio:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_threshold_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EstimatorConfig::new(1e-3).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let deg = rng.random_range(2..=6);
        let f = Poly::new((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect());
        let n = [8, 16, 64, 128][rng.random_range(0..4)];
        let grid = Grid::uniform(n, 1).unwrap();
        let v = test_convex_second_derivative(&f, &grid, &cfg).unwrap();
        let (q, _) = f.normalize_output();
        let qn = normalizers(&Bounds::univariate(&q)).q_norm;
        let d2 = q.derivative(2);
        let min_m2 = grid.axis(0).iter().map(|&x| d2.eval(x) / qn).fold(f64::INFINITY, f64::min);
        worst = worst.max((v.estimates["lambda_max"] - (1.0 - min_m2) / 2.0).abs());
    }

    // f = x^3 / 6 + t x^2 / 2 has f'' = x + t, so min f'' on the grid is t - 1/2
    let grid = Grid::uniform(32, 1).unwrap();
    let mut flips_ok = true;
    let mut seen = (false, false, false);
    for i in 0..=200 {
        let t = 0.3 + 0.4 * i as f64 / 200.0;
        let f = Poly::new(vec![0.0, 0.0, t / 2.0, 1.0 / 6.0]);
        let v = test_convex_second_derivative(&f, &grid, &cfg).unwrap();
        let (q, _) = f.normalize_output();
        let qn = normalizers(&Bounds::univariate(&q)).q_norm;
        let margin = (t - 0.5) / v.scale / qn / 2.0;
        let expected = if margin > 2.0 * cfg.eps {
            seen.0 = true;
            Outcome::ConvexOnGrid
        } else if margin < -2.0 * cfg.eps {
            seen.1 = true;
            Outcome::NotConvex
        } else {
            seen.2 = true;
            Outcome::Inconclusive
        };
        flips_ok &= v.outcome == expected;
    }
    let pass = worst <= 1e-10 && flips_ok && seen.0 && seen.1;
    report(
        4,
        pass,
        "lambda_max((I - M2)/2) = (1 - lambda_min(M2))/2 and the decision flips at min f'' = 0",
        format!("max identity error {worst:.2e}, flip sweep consistent: {flips_ok}, sides seen {seen:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_jensen_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut multi_count = 0;
    for trial in 0..200u64 {
        let eps = [1e-2, 1e-3, 1e-4][rng.random_range(0..3)];
        let cfg = EstimatorConfig::new(eps).unwrap().with_noise(NoiseMode::Uniform).with_seed(trial);
        let (f, grid) = if trial % 2 == 0 {
            (Function::Uni(random_poly(&mut rng, 6)), Grid::uniform([8, 16, 64][rng.random_range(0..3)], 1).unwrap())
        } else {
            multi_count += 1;
            let dim = rng.random_range(2..=4);
            let n = match dim {
                2 => 64,
                3 => 64,
                _ => 16,
            };
            (Function::Multi(random_multi(&mut rng, dim, 8, 3)), Grid::uniform(n, dim).unwrap())
        };
        let w = WeightVector::new(random_weights(&mut rng, grid.real_len()), &grid).unwrap();
        let v = test_convex_jensen(&f, &grid, &w, &cfg).unwrap();
        let o = oracle_for(Method::Jensen, &f, &grid, Some(&w), Direction::Increasing).unwrap();
        let (lhs, rhs) = (o.values["lhs"] / v.scale, o.values["rhs"] / v.scale);
        let err = (v.estimates["lhs"] - lhs).abs().max((v.estimates["rhs"] - rhs).abs());
        worst = worst.max(err / eps);
        let exact_lhs = v.estimates["lhs_amplitude"] * v.estimates["lhs_correction"];
        worst_exact = worst_exact.max((exact_lhs - v.estimates["lhs"]).abs());
    }
    let pass = worst <= 1.0;
    report(
        5,
        pass,
        "Jensen LHS/RHS within eps of exact values, 200 triples (uni and multi, dim <= 4, K <= 8)",
        format!("{multi_count} multivariate, worst error / eps = {worst:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_multivariate_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let dim = rng.random_range(1..=4);
        let n = match dim {
            1 => 32,
            2 => 64,
            3 => 64,
            _ => 16,
        };
        let f = random_multi(&mut rng, dim, 8, 4);
        let grid = Grid::uniform(n, dim).unwrap();
        let axes = encode_grid(&grid).unwrap();
        let m = build_multivariate_m(&f, &axes, 16).unwrap();
        let diag = m.enc.op().diagonal();
        for (j, x) in grid.points().iter().enumerate() {
            worst = worst.max((diag[j] / m.enc.alpha() * m.factor() - f.eval(x)).abs());
        }
    }
    let pass = worst <= 1e-10;
    report(6, pass, "multivariate encoding entries x KC equal f(x_j)", format!("max error {worst:.2e}"));
    assert!(pass);
}

/// Least-squares fit of `log y = log c + k log x`. With `fixed = Some(k)` only `c` is fitted.
fn loglog_fit(xs: &[f64], ys: &[f64], fixed: Option<f64>) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let slope = fixed.unwrap_or_else(|| {
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    });
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    (slope, 1.0 - ss_res / ss_tot)
}

#[test]
fn criterion_7_ledger_scaling() {
    let cfg = EstimatorConfig::new(1e-2).unwrap();
    let f = Poly::new(vec![0.1, -0.2, 0.5, 0.3]);
    let (mut logs, mut second, mut jensen) = (Vec::new(), Vec::new(), Vec::new());
    for k in 4..=12u32 {
        let n = 1usize << k;
        let grid = Grid::uniform(n, 1).unwrap();
        let w = WeightVector::uniform(&grid);
        let s = test_convex_second_derivative(&f, &grid, &cfg).unwrap();
        let j = test_convex_jensen(&Function::Uni(f.clone()), &grid, &w, &cfg).unwrap();
        logs.push(k as f64);
        second.push(s.ledger.depth_units() as f64);
        jensen.push(j.ledger.depth_units() as f64);
        println!("  n = 2^{k}: second-deriv depth {}, jensen depth {}", s.ledger.depth_units(), j.ledger.depth_units());
    }
    let (_, r2_second) = loglog_fit(&logs, &second, Some(2.0));
    let (_, r2_jensen) = loglog_fit(&logs, &jensen, Some(1.0));
    let (k_second, _) = loglog_fit(&logs, &second, None);
    let (k_jensen, _) = loglog_fit(&logs, &jensen, None);
    let ns: Vec<f64> = logs.iter().map(|k| 2f64.powf(*k)).collect();
    let (p_second, _) = loglog_fit(&ns, &second, None);
    let (p_jensen, _) = loglog_fit(&ns, &jensen, None);
    println!(
        "  info: free exponents in log n: second-deriv {k_second:.2}, jensen {k_jensen:.2}; \
         in n: second-deriv {p_second:.3}, jensen {p_jensen:.3}"
    );
    let pass = r2_second >= 0.95 && r2_jensen >= 0.95;
    report(
        7,
        pass,
        "depth fits c (log n)^2 (second-deriv) and c log n (Jensen) with R^2 >= 0.95",
        format!("R^2 second-deriv {r2_second:.3}, jensen {r2_jensen:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.json");
    std::fs::write(
        &input,
        r#"{"schema":1,"poly":{"kind":"uni","coeffs":[1,-2,0,1]},"domain":[[0.6,1.4]],"grid":{"kind":"uniform","n":64}}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    let mut codes = Vec::new();
    for run in 0..10 {
        let path = dir.path().join(format!("report{run}.json"));
        let code = cli::run([
            "qshape",
            "test",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "all",
            "--noise",
            "uniform",
            "--seed",
            "42",
            "--report",
            path.to_str().unwrap(),
        ]);
        assert_ne!(code, 1);
        codes.push(code);
        outputs.push(std::fs::read(&path).unwrap());
    }
    let pass = outputs.windows(2).all(|w| w[0] == w[1]) && codes.windows(2).all(|c| c[0] == c[1]);
    report(8, pass, "identical input and seed give byte-identical reports", format!("10 runs, {} bytes", outputs[0].len()));
    assert!(pass);
}
