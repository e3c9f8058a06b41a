//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS line (visible with `--nocapture`) after asserting the
//! stated tolerance.

use oulab::lyapunov::{
    check_h_sigma, eval_resolvent_v, excessivity_probe, h_sigma_lhs, h_sigma_point, hs_finite,
    make_gamma_sequence, sigma2_zero_threshold, GridSpec, LyapunovParams,
};
use oulab::mc::RunningStats;
use oulab::mehler::{check_m2, mu_hat, sample_mu};
use oulab::noise::{NoiseFamily, NoiseSpec};
use oulab::pathsim::{dichotomy_experiment, StableRegime};
use oulab::potential::{
    hitting_balayage, is_excessive, mc_balayage, nest_check, random_chain, reduced_fixed_point,
    resolvent, FiniteChain,
};
use oulab::rng::SeedSpec;
use oulab::spectral::{dirichlet_spectrum, CoefVector, SpectralModel};
use rand::Rng;
use std::process::Command;
use std::time::Instant;

/// Interval demo: d=1 Dirichlet spectrum, Gaussian scales k^-1, stable
/// scales k^-1.5, Cauchy index, with feasible Lyapunov exponents.
fn demo(n: usize) -> (SpectralModel, NoiseSpec, LyapunovParams) {
    let model = dirichlet_spectrum(1, n).unwrap();
    let noise =
        NoiseSpec::from_power_laws(n, 1.0, NoiseFamily::Diagonal, Some(-1.0), Some(-1.5)).unwrap();
    let seq = make_gamma_sequence(0.4, 1.0, &noise, &model, 1.0)
        .unwrap()
        .gamma_seq;
    let params = LyapunovParams::new(0.15, 2.5, 1.0, 0.4, seq).unwrap();
    (model, noise, params)
}

#[test]
fn cf_ground_truth() {
    let started = Instant::now();
    let (model, noise, _) = demo(64);
    let seed = SeedSpec::new(42);
    let t = 1.0;
    let freqs = [0.5, 1.0, 1.5, 2.0, 2.5];
    let xis: Vec<CoefVector> = freqs
        .iter()
        .enumerate()
        .map(|(j, &f)| CoefVector::unit(64, j + 1, f))
        .collect();
    let mut stats = [RunningStats::new(); 5];
    for i in 0..100_000u64 {
        let z = sample_mu(&model, &noise, t, 1, &seed, i, 0).unwrap();
        for (s, xi) in stats.iter_mut().zip(&xis) {
            s.push(xi.dot(&z).cos());
        }
    }
    for (s, xi) in stats.iter().zip(&xis) {
        let exact = mu_hat(&model, &noise, t, xi).unwrap();
        let e = s.estimate();
        assert!(
            (e.value - exact).abs() <= 3.0 * e.std_error,
            "CF mismatch: {} vs {} (se {})",
            e.value,
            exact,
            e.std_error
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "PASS cf_ground_truth: 5 frequencies within 3 SE of the closed form \
         over 100000 one-step samples ({elapsed:?})"
    );
}

#[test]
fn semigroup_composition_law() {
    let seed = SeedSpec::new(7);
    // 100 random Diagonal cases at closed-form accuracy
    let (model, noise, _) = demo(64);
    let mut worst_diag = 0.0f64;
    for case in 0..100u64 {
        let mut rng = seed.stream(case, 0, 0);
        let t = rng.gen_range(0.05..2.0);
        let s = rng.gen_range(0.05..2.0);
        let xi = CoefVector((0..64).map(|_| rng.gen_range(-1.0..1.0)).collect());
        worst_diag = worst_diag.max(check_m2(&model, &noise, t, s, &xi).unwrap());
    }
    assert!(worst_diag <= 1e-12, "diagonal residual {worst_diag:e}");
    // 20 Elliptical cases at quadrature accuracy
    let model = dirichlet_spectrum(1, 16).unwrap();
    let noise =
        NoiseSpec::from_power_laws(16, 1.2, NoiseFamily::Elliptical, Some(-1.0), Some(-1.5))
            .unwrap();
    let mut worst_ell = 0.0f64;
    for case in 0..20u64 {
        let mut rng = seed.stream(case, 1, 0);
        let t = rng.gen_range(0.05..2.0);
        let s = rng.gen_range(0.05..2.0);
        let xi = CoefVector((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        worst_ell = worst_ell.max(check_m2(&model, &noise, t, s, &xi).unwrap());
    }
    assert!(worst_ell <= 1e-7, "elliptical residual {worst_ell:e}");
    println!(
        "PASS semigroup_composition_law: worst residual {worst_diag:.2e} \
         (diagonal, tol 1e-12) / {worst_ell:.2e} (elliptical, tol 1e-7)"
    );
}

#[test]
fn hilbert_schmidt_boundary() {
    // gamma < 1/d - 1/2 decides summability, exactly, on a grid across it
    for d in 1..=3usize {
        let boundary = 1.0 / d as f64 - 0.5;
        for off in -10..=10i32 {
            let gamma = boundary + 0.01 * off as f64;
            assert_eq!(hs_finite(d, gamma), gamma < boundary, "d={d} gamma={gamma}");
        }
    }
    println!("PASS hilbert_schmidt_boundary: boolean agreement on the 3x21 grid");
}

#[test]
fn spectral_feasibility() {
    // the reference witness satisfies all three inequalities
    assert!(h_sigma_point(1, 1.0, -0.2, Some(-1.5), 0.24, 2.93));
    let (l1, l2, l3) = h_sigma_lhs(1, 1.0, -0.2, Some(-1.5), 0.24, 2.93);
    assert!(l1 < -1.0 && l2.unwrap() < -1.0 && l3 > 1.0);
    let report = check_h_sigma(1, 1.0, -0.2, Some(-1.5), None).unwrap();
    assert!(report.feasible && report.witness.is_some());

    // gamma2 = -0.5 breaks the stable inequality for every (a,p)
    let report = check_h_sigma(1, 1.0, -0.2, Some(-0.5), None).unwrap();
    assert!(!report.feasible);
    assert!(!report.condition_flags["stable_inequality"]);

    // with no stable part, feasibility reduces to a sharp gamma1 threshold
    let grid = GridSpec {
        a_hi: 200.0,
        ..GridSpec::default()
    };
    for d in 1..=3usize {
        let threshold = sigma2_zero_threshold(d, grid.p_hi);
        for off in [-0.02, -0.007, 0.007, 0.02] {
            let gamma1 = threshold + off;
            let r = check_h_sigma(d, 1.0, gamma1, None, Some(grid)).unwrap();
            assert_eq!(r.feasible, gamma1 < threshold, "d={d} gamma1={gamma1}");
        }
    }
    println!(
        "PASS spectral_feasibility: witness verified, gamma2=-0.5 infeasible, \
         sigma2=0 reduction exact"
    );
}

#[test]
fn lyapunov_excessivity() {
    let (model, noise, params) = demo(16);
    let seed = SeedSpec::new(11);
    // supermartingale inequality at 10 random states, two step sizes
    for state in 0..10u64 {
        let mut rng = seed.stream(state, 0, 0);
        let x = CoefVector(
            (1..=16)
                .map(|k| rng.gen_range(-2.0..2.0) / k as f64)
                .collect(),
        );
        for (hi, h) in [0.01, 0.1].into_iter().enumerate() {
            let check = excessivity_probe(
                &model,
                &noise,
                &params,
                &x,
                h,
                120,
                120,
                1,
                &seed.derive(100 + 2 * state + hi as u64),
            )
            .unwrap();
            assert!(
                check.pass,
                "state {state} h {h}: lhs {:?} rhs {:?}",
                check.lhs, check.rhs
            );
        }
    }
    // monotone along the first eigen-axis under common random numbers
    let v_seed = SeedSpec::new(13);
    let mut previous = f64::MIN;
    for r in [1.0, 5.0, 25.0] {
        let x = CoefVector::unit(16, 1, r);
        let est = eval_resolvent_v(&x, &model, &noise, &params, 40_000, 1, &v_seed).unwrap();
        assert!(!est.diverging);
        assert!(
            est.estimate.value > previous,
            "V not monotone at r={r}: {} <= {previous}",
            est.estimate.value
        );
        previous = est.estimate.value;
    }
    println!(
        "PASS lyapunov_excessivity: supermartingale bound at 10 states \
         (h = 0.01, 0.1), potential monotone over r = 1, 5, 25"
    );
}

#[test]
fn dichotomy_slopes() {
    let started = Instant::now();
    let rows = dichotomy_experiment(
        0.5,
        &[-3.0, -1.0],
        &[16, 32, 64, 128, 256, 512, 1024],
        1.0,
        200,
        200,
        &SeedSpec::new(42),
    )
    .unwrap();
    assert_eq!(rows[0].regime, StableRegime::Convergent);
    assert_eq!(rows[1].regime, StableRegime::Divergent);
    assert!(
        rows[0].slope.abs() < 0.05,
        "convergent slope {}",
        rows[0].slope
    );
    assert!(rows[1].slope > 0.2, "divergent slope {}", rows[1].slope);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "PASS dichotomy_slopes: slope {:.4} (gamma2 = -3) vs {:.4} (gamma2 = -1) \
         over N in 16..1024 ({elapsed:?})",
        rows[0].slope, rows[1].slope
    );
}

#[test]
fn potential_oracle_equivalence() {
    // two-state closed form
    let two = FiniteChain::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    for result in [
        reduced_fixed_point(&two, 1.0, &[1], &[1.0, 1.0]).unwrap(),
        hitting_balayage(&two, 1.0, &[1], &[1.0, 1.0]).unwrap(),
    ] {
        assert!((result.values[0] - 0.5).abs() < 1e-10);
        assert!((result.values[1] - 1.0).abs() < 1e-10);
    }
    // the two exact methods agree on 200 random chains
    let seed = SeedSpec::new(223);
    let mut worst = 0.0f64;
    for inst in 0..200u64 {
        let mut rng = seed.stream(inst, 0, 0);
        let n = 2 + (inst as usize % 7);
        let chain = random_chain(n, &mut rng);
        let alpha = [0.5, 1.0, 2.0][inst as usize % 3];
        let a: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let uf = resolvent(&chain, alpha).unwrap() * nalgebra_vec(&f);
        let u: Vec<f64> = uf.column(0).iter().cloned().collect();
        let fp = reduced_fixed_point(&chain, alpha, &a, &u).unwrap();
        let hs = hitting_balayage(&chain, alpha, &a, &u).unwrap();
        for (p, q) in fp.values.iter().zip(&hs.values) {
            worst = worst.max((p - q).abs());
        }
        assert!(is_excessive(&chain, alpha, &fp.values).unwrap().excessive);
    }
    assert!(worst < 1e-8, "worst gap {worst:e}");
    // Monte Carlo within 3 SE (plus the horizon bracket) on 20 instances
    for inst in 0..20u64 {
        let mut rng = seed.stream(inst, 1, 0);
        let n = 2 + (inst as usize % 5);
        let chain = random_chain(n, &mut rng);
        let a: Vec<usize> = {
            let pick: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
            if pick.is_empty() {
                vec![rng.gen_range(0..n)]
            } else {
                pick
            }
        };
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let exact = hitting_balayage(&chain, 1.0, &a, &u).unwrap();
        let mc = mc_balayage(
            &chain,
            1.0,
            &a,
            &u,
            20_000,
            None,
            &SeedSpec::new(300 + inst),
        )
        .unwrap();
        let se = mc.std_errors.unwrap();
        let bracket = mc.bracket.unwrap();
        #[allow(clippy::needless_range_loop)]
        for x in 0..n {
            assert!(
                (mc.values[x] - exact.values[x]).abs() <= 3.0 * se[x] + bracket,
                "inst {inst} state {x}: {} vs {}",
                mc.values[x],
                exact.values[x]
            );
        }
    }
    println!(
        "PASS potential_oracle_equivalence: exact methods within {worst:.2e} \
         on 200 chains, closed form reproduced, Monte Carlo within 3 SE on 20"
    );
}

fn nalgebra_vec(f: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_column_slice(f.len(), 1, f)
}

#[test]
fn nest_verification() {
    let n = 51;
    let mut rows = vec![vec![0.0; n]; n];
    for x in 0..n {
        if x + 1 < n {
            rows[x][x + 1] = 0.2;
        }
        if x > 0 {
            rows[x][x - 1] = 1.0;
        }
        rows[x][x] = -(rows[x].iter().sum::<f64>());
    }
    let chain = FiniteChain::from_rows(&rows).unwrap();
    let subsets: Vec<Vec<usize>> = [10usize, 20, 30, 40]
        .iter()
        .map(|&m| (0..=m).collect())
        .collect();
    let report = nest_check(&chain, 1.0, &subsets, 200, 200.0, &SeedSpec::new(233)).unwrap();
    assert!(report.is_nest);
    let first = report.rows[0].balayage_max;
    let last = report.rows[3].balayage_max;
    assert!(
        last * 10.0 < first,
        "balayage decreased only from {first:e} to {last:e}"
    );
    for w in report.rows.windows(2) {
        assert!(
            w[1].exit_median >= w[0].exit_median,
            "exit medians not monotone: {} then {}",
            w[0].exit_median,
            w[1].exit_median
        );
    }
    println!(
        "PASS nest_verification: balayage max fell {first:.3e} -> {last:.3e} \
         (>= 10x) with monotone exit-time medians"
    );
}

#[test]
fn byte_identical_reruns() {
    let bin = env!("CARGO_BIN_EXE_oulab");
    let base = std::env::temp_dir().join(format!("oulab-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let chain_file = base.join("chain.csv");
    std::fs::create_dir_all(&base).unwrap();
    std::fs::write(&chain_file, "-1.0,1.0\n1.0,-1.0\n").unwrap();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("spectrum.csv", vec!["spectrum".into()]),
        (
            "path.csv",
            vec![
                "--set".into(),
                "model.n=16".into(),
                "--set".into(),
                "run.steps=50".into(),
                "simulate".into(),
            ],
        ),
        (
            "dichotomy.csv",
            vec![
                "--set".into(),
                "noise.alpha=0.5".into(),
                "--set".into(),
                "run.n_list=[4, 8, 16]".into(),
                "--set".into(),
                "run.gamma2_list=[-2.0]".into(),
                "--set".into(),
                "run.n_paths=20".into(),
                "--set".into(),
                "run.steps=20".into(),
                "dichotomy".into(),
            ],
        ),
        (
            "check_hamu.json",
            vec!["--set".into(), "model.n=16".into(), "check-hamu".into()],
        ),
        (
            "potlab_nest.json",
            vec![
                "potlab".into(),
                "nest".into(),
                "--chain".into(),
                chain_file.display().to_string(),
                "--subsets".into(),
                "0;0-1".into(),
                "--n-paths".into(),
                "50".into(),
            ],
        ),
    ];
    for (file, args) in &runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = base.join(format!("{file}.{rep}"));
            let status = Command::new(bin)
                .arg("--no-timestamp")
                .arg("--output")
                .arg(&dir)
                .args(args)
                .output()
                .unwrap();
            assert!(
                status.status.success(),
                "{file} run {rep} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            );
            outputs.push(std::fs::read(dir.join(file)).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{file} differs between reruns");
        assert!(!outputs[0].is_empty());
    }
    let _ = std::fs::remove_dir_all(&base);
    println!(
        "PASS byte_identical_reruns: {} artifacts byte-identical across reruns",
        runs.len()
    );
}
