//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to see them
//! in order.

use std::process::Command;
use std::time::{Duration, Instant};

use cevlab::{
    deterministic_error, inner_value, max_stable_step, moment_check, negativity_stats,
    run_with_threads, sample_increments, simulate_terminal, strong_error, validate_assumption_a,
    CevParams, ConvergenceReport, LevelSpec, SchemeId, StreamKey, TimeGrid,
};
use rayon::prelude::*;

fn standard() -> CevParams {
    CevParams::new(1.0, 1.0, 1.0, 0.75, 1.0).unwrap()
}

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!(
        "[{verdict}] #{id} {name} ({:.1}s): {detail}",
        elapsed.as_secs_f64()
    );
}

/// Minimum iterate and clamp count over `n_paths` paths.
fn sweep_paths(
    scheme: SchemeId,
    params: &CevParams,
    grid: &TimeGrid,
    n_paths: u64,
    seed: u64,
) -> (f64, u64) {
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let inc =
                sample_increments(StreamKey::new(seed, p), grid.n_steps(), grid.dt()).unwrap();
            let s = simulate_terminal(scheme, params, grid, &inc).unwrap();
            (s.min_value, s.clamp_count)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, 0), |(m, c), (pm, pc)| (m.min(pm), c + pc))
}

#[test]
fn criterion_1_positivity() {
    let start = Instant::now();
    let grid = TimeGrid::dyadic(1.0, 6).unwrap();
    let (semi_min, clamps) = sweep_paths(SchemeId::SemiDiscrete, &standard(), &grid, 100_000, 1);

    let stress = CevParams::new(1.0, 0.61, 1.0, 0.6, 0.1).unwrap();
    let coarse = TimeGrid::dyadic(1.0, 2).unwrap();
    let (naive_min, _) = sweep_paths(SchemeId::EulerNaive, &stress, &coarse, 10_000, 1);

    let elapsed = start.elapsed();
    let ok = semi_min > 0.0 && clamps == 0 && naive_min < 0.0 && elapsed < Duration::from_secs(60);
    report(
        1,
        "positivity",
        ok,
        elapsed,
        format!("semi-discrete min iterate {semi_min:e}, clamps {clamps}; naive Euler min iterate {naive_min:e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_inner_nonnegativity() {
    let start = Instant::now();
    let mut ys = vec![0.0];
    ys.extend((0..9_999).map(|i| 10f64.powf(-12.0 + 18.0 * i as f64 / 9_998.0)));

    let mut sets = Vec::new();
    for k in [0.1f64, 0.5, 1.0, 2.0, 5.0] {
        for &sigma in &[0.0, 0.3, 1.0, 2.0] {
            for &a in &[0.55, 0.75, 0.95] {
                let boundary = a * sigma * sigma / (2.0 * k);
                let mut l = boundary;
                while k * l < a * sigma * sigma / 2.0 {
                    l = l.next_up();
                }
                sets.push(CevParams::new(k, l, sigma, a, 1.0).unwrap());
                sets.push(CevParams::new(k, l + 0.5, sigma, a, 1.0).unwrap());
            }
        }
    }
    sets.truncate(100);
    let mut worst = f64::INFINITY;
    let mut failures = 0usize;
    let mut boundary_sets = 0usize;
    for (idx, params) in sets.iter().enumerate() {
        if params.drift_margin() < 1e-15 {
            boundary_sets += 1;
        }
        let max = max_stable_step(params);
        let dt = if idx % 2 == 0 { max } else { max / 3.0 };
        assert!(validate_assumption_a(params, dt).feasible);
        for &y in &ys {
            match inner_value(y, dt, params) {
                Ok(inner) if inner.value >= 0.0 => worst = worst.min(inner.value / y.max(1.0)),
                _ => failures += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = sets.len() == 100 && failures == 0 && boundary_sets > 0;
    report(
        2,
        "inner nonnegativity",
        ok,
        elapsed,
        format!(
            "{} parameter sets ({boundary_sets} on the drift boundary) x {} states, {failures} below tolerance, smallest scaled inner {worst:e}",
            sets.len(),
            ys.len()
        ),
    );
    assert!(ok);
}

fn convergence_spec() -> LevelSpec {
    LevelSpec {
        ref_exponent: 12,
        test_exponents: (4..=9).collect(),
        n_paths: 10_000,
        master_seed: 20_240_611,
    }
}

#[test]
fn criterion_3_strong_order() {
    let start = Instant::now();
    let r = strong_error(
        &standard(),
        SchemeId::SemiDiscrete,
        &convergence_spec(),
        1.0,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let fit = r.fit.unwrap();
    let ok = fit.slope >= 0.1875 - 0.05 && fit.r2 >= 0.9 && elapsed < Duration::from_secs(600);
    let rmse: Vec<String> = r.levels.iter().map(|l| format!("{:.3e}", l.rmse)).collect();
    report(
        3,
        "strong order",
        ok,
        elapsed,
        format!(
            "observed order {:.4} (bound {}), r2 {:.5}, rmse by level [{}]",
            fit.slope,
            r.theoretical_order,
            fit.r2,
            rmse.join(", ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_deterministic_order() {
    let start = Instant::now();
    let params = CevParams::new(1.0, 1.0, 0.0, 0.75, 2.0).unwrap();
    let exact = deterministic_error(
        &params,
        SchemeId::SemiDiscrete,
        &(4..=9).collect::<Vec<_>>(),
        1.0,
    )
    .unwrap();
    let spec = LevelSpec {
        n_paths: 1000,
        ..convergence_spec()
    };
    let self_ref = strong_error(&params, SchemeId::SemiDiscrete, &spec, 1.0).unwrap();
    let elapsed = start.elapsed();
    let exact_order = exact.fit.unwrap().slope;
    let ref_order = self_ref.fit.unwrap().slope;
    let ok = (exact_order - 1.0).abs() <= 0.05 && (ref_order - 1.0).abs() <= 0.05;
    report(
        4,
        "deterministic order",
        ok,
        elapsed,
        format!("order {exact_order:.4} against the exact ODE, {ref_order:.4} against level 2^-12"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_mean_consistency() {
    let start = Instant::now();
    let params = standard().with_x0(2.0).unwrap();
    let grid = TimeGrid::dyadic(1.0, 8).unwrap();
    let m = moment_check(&params, SchemeId::SemiDiscrete, &grid, 100_000, 5).unwrap();
    let elapsed = start.elapsed();
    let err = (m.sample_mean - 1.3678794).abs();
    let tol = 3.0 * m.se_mean + 0.01;
    let ok = err <= tol && elapsed < Duration::from_secs(120);
    report(
        5,
        "mean consistency",
        ok,
        elapsed,
        format!(
            "sample mean {:.6} (se {:.2e}), |error| {err:.2e} <= {tol:.2e}",
            m.sample_mean, m.se_mean
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_sign_flip_rarity() {
    let start = Instant::now();
    let params = standard();
    let grid = TimeGrid::dyadic(1.0, 4).unwrap();
    let stats = negativity_stats(&params, &grid, 62_500, 6).unwrap();

    let sweep: Vec<f64> = (4..=8)
        .map(|e| {
            let g = TimeGrid::dyadic(1.0, e).unwrap();
            negativity_stats(&params, &g, 62_500, 6)
                .unwrap()
                .max_step_prob
        })
        .collect();
    let monotone = sweep.windows(2).all(|w| w[1] <= w[0]);
    let elapsed = start.elapsed();

    let no_events = stats.total_steps >= 1_000_000 && stats.sign_flip_events == 0;
    let tiny = stats.max_step_prob < 1e-50;
    let ok = no_events && tiny && monotone && elapsed < Duration::from_secs(60);
    let sweep_text: Vec<String> = sweep.iter().map(|p| format!("{p:.2e}")).collect();
    report(
        6,
        "sign-flip rarity",
        ok,
        elapsed,
        format!(
            "{} events over {} steps (expected {:.2e}); max per-step probability {:.3e} (required < 1e-50); \
             max probability for dt = 2^-4..2^-8 [{}] monotone={monotone}",
            stats.sign_flip_events,
            stats.total_steps,
            stats.expected_events,
            stats.max_step_prob,
            sweep_text.join(", ")
        ),
    );
    assert!(no_events, "observed sign flips");
    assert!(monotone, "max probability grew under refinement");
    assert!(
        tiny,
        "max per-step probability {:e} along visited states is not below 1e-50",
        stats.max_step_prob
    );
}

#[test]
fn criterion_7_second_moment() {
    let start = Instant::now();
    let params = standard();
    let moments: Vec<(u32, f64, f64)> = (4..=9)
        .map(|e| {
            let g = TimeGrid::dyadic(1.0, e).unwrap();
            let m =
                moment_check(&params, SchemeId::SemiDiscrete, &g, 100_000, 700 + e as u64).unwrap();
            (e, m.sample_second_moment, m.se_second)
        })
        .collect();
    let elapsed = start.elapsed();
    let (coarse, fine) = (moments[0], moments[moments.len() - 1]);
    let diff = (fine.1 - coarse.1).abs();
    let pooled = (fine.2 * fine.2 + coarse.2 * coarse.2).sqrt();
    let finite = moments.iter().all(|m| m.1.is_finite());
    let ok = finite && diff < 5.0 * pooled && elapsed < Duration::from_secs(300);
    let text: Vec<String> = moments
        .iter()
        .map(|m| format!("2^-{}: {:.4}", m.0, m.1))
        .collect();
    report(
        7,
        "second-moment boundedness",
        ok,
        elapsed,
        format!(
            "E[y_T^2] [{}]; |finest - coarsest| {diff:.2e} < 5 x pooled se {pooled:.2e}",
            text.join(", ")
        ),
    );
    assert!(ok);
}

fn bits(r: &ConvergenceReport) -> Vec<u64> {
    r.levels
        .iter()
        .flat_map(|l| [l.mse.to_bits(), l.ci_halfwidth.to_bits()])
        .chain(r.fit.map(|f| f.slope.to_bits()))
        .collect()
}

#[test]
fn criterion_8_reproducibility() {
    let start = Instant::now();
    let spec = convergence_spec();
    let run = |threads| {
        run_with_threads(Some(threads), || {
            strong_error(&standard(), SchemeId::SemiDiscrete, &spec, 1.0)
        })
        .unwrap()
        .unwrap()
    };
    let library_same = bits(&run(1)) == bits(&run(4));

    let dir = tempfile::tempdir().unwrap();
    let cli = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_cevlab"))
            .current_dir(dir.path())
            .env("CEVLAB_THREADS", threads)
            .args([
                "convergence",
                "--k=1",
                "--l=1",
                "--sigma=1",
                "--a=0.75",
                "--x0=1",
                "--test_exponents=4..9",
                "--ref_exponent=12",
                "--n_paths=10000",
                "--seed=20240611",
                "--output.format=json",
            ])
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let cli_same = cli("1") == cli("4");
    let elapsed = start.elapsed();
    let ok = library_same && cli_same;
    report(
        8,
        "reproducibility",
        ok,
        elapsed,
        format!("library reports identical: {library_same}; CLI JSON identical for CEVLAB_THREADS=1,4: {cli_same}"),
    );
    assert!(ok);
}
