//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use intermittent_walk::dynsys::{simulate_trajectories, Precision, TrajectoryConfig};
use intermittent_walk::environment::{
    diagnostics, lsv_cn_sequence, Beta, EnvDiagnostics, LsvParams, SiteGenerator, SiteMoments,
};
use intermittent_walk::limits::{
    clt_report, fit_limit_params, llt_error_decomposition, llt_report, slln_report, LimitParams,
};
use intermittent_walk::random_env::{sample_environment, ParamSampler, RandomEnvModel};
use intermittent_walk::walk::{
    hitting_time_distribution, level_distribution, position_distribution, simulate_paths, sojourn_pmf, ExactOptions,
    McConfig, Record, Sampler,
};
use intermittent_walk::{json, Environment, Error, TailSequence, Truncation};

type Outcome = Result<(bool, String), Error>;

fn geometric(sites: usize) -> Result<(Environment, EnvDiagnostics), Error> {
    let env = Environment::geometric(0.5, sites, Truncation::default())?;
    let diag = diagnostics(&env, &Beta::Constant(3.0), sites)?;
    Ok((env, diag))
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Brute-force law of `τ_0 + … + τ_{x−1}` by enumerating every sojourn tuple.
fn enumerate_hitting(env: &Environment, x: usize) -> Result<BTreeMap<usize, f64>, Error> {
    let mut law = BTreeMap::from([(0usize, 1.0f64)]);
    for site in 0..x {
        let s = env.site(site)?;
        let top = s.last_index() + 1;
        let atoms: Vec<(usize, f64)> = (1..=top).map(|k| (k, s.omega(k - 1).unwrap() - s.omega(k).unwrap())).collect();
        let mut next = BTreeMap::new();
        for (&t, &p) in &law {
            for &(k, q) in &atoms {
                *next.entry(t + k).or_insert(0.0) += p * q;
            }
        }
        law = next;
    }
    Ok(law)
}

fn oracle_equivalence() -> Outcome {
    let trunc = Truncation::new(5, 1e-300)?;
    let lsv = LsvParams::from_alpha_c(0.33, 0.5)?;
    let envs = [
        ("geometric", Environment::geometric(0.5, 5, trunc)?),
        ("power-law", Environment::power_law(3.0, 5, trunc)?),
        ("lsv", Environment::from_lsv(&[lsv; 5], trunc)?),
    ];
    let opts = ExactOptions { trunc_tol: 0.0, deficit_budget: 1.0 };
    let mut worst = 0.0_f64;
    let mut clipped = true;
    for (_, env) in &envs {
        clipped &= env.sites().all(|s| s.last_index() == 5);
        for x in 0..=4 {
            let exact = hitting_time_distribution(env, x, opts)?;
            let brute = enumerate_hitting(env, x)?;
            let support: Vec<usize> = brute.keys().copied().chain(exact.atoms().map(|(k, _)| k)).collect();
            for k in support {
                let b = brute.get(&k).copied().unwrap_or(0.0);
                worst = worst.max((exact.pmf(k) - b).abs());
            }
        }
    }
    Ok((worst <= 1e-12 && clipped, format!("max atom error {worst:.3e} over 3 environments, x ≤ 4, sojourns in 1..6")))
}

fn moment_identities() -> Outcome {
    // Tail sum against the pmf mean, completed by the Abel remainder (N+1)ω_{N+1} and the unstored tail.
    let trunc = Truncation::new(100_000, 1e-12)?;
    let sites = [
        TailSequence::new(vec![1.0, 0.5, 0.25], 0.0, SiteGenerator::Explicit)?,
        intermittent_walk::environment::geometric_site(0.5, trunc)?,
        intermittent_walk::environment::power_law_site(3.0, trunc)?,
        intermittent_walk::environment::lsv_site(LsvParams::from_alpha_c(0.33, 0.5)?, trunc)?,
    ];
    let mut mean_ok = true;
    let mut worst = 0.0_f64;
    for s in &sites {
        let m = SiteMoments::of(s);
        let pmf = sojourn_pmf(s);
        let first: f64 = pmf.atoms().map(|(k, p)| k as f64 * p).sum();
        let completed = first + (s.last_index() + 1) as f64 * s.deficit() + s.tail_sums().first_est;
        let err = (m.m - completed).abs();
        worst = worst.max(err);
        mean_ok &= err <= 1e-10 + s.deficit();
    }
    let small = SiteMoments::of(&sites[0]);
    let geo = SiteMoments::of(&sites[1]);
    let direct_ok = small.second == 3.75 && (geo.second - 6.0).abs() <= 1e-10;
    let flag_ok = small.second_alt == 7.25 && small.second_alt - small.second == 2.0 * small.m;
    Ok((
        mean_ok && direct_ok && flag_ok,
        format!(
            "mean mismatch {worst:.2e}; Eτ² = {} on (1,½,¼), {:.12} on r=½; printed form {} differs by {} = 2m",
            small.second,
            geo.second,
            small.second_alt,
            small.second_alt - small.second
        ),
    ))
}

fn walk_dynamics_equivalence() -> Outcome {
    let (env, _) = geometric(64)?;
    let paths = 200_000;
    let cfg =
        TrajectoryConfig { paths, horizon: 50, seed: 20_241, precision: Precision::Extended, times: vec![10, 50] };
    let traj = simulate_trajectories(&env, &cfg)?;
    let opts = ExactOptions::default();
    let mut ok = traj.flagged == 0;
    let mut detail = Vec::new();
    for (i, &n) in [10usize, 50].iter().enumerate() {
        let exact = position_distribution(&env, n, opts)?.dense(env.len());
        let d = tv(&traj.cell_frequencies(i), &exact);
        let tol = 4.0 * (n as f64 / paths as f64).sqrt();
        ok &= d <= tol;
        detail.push(format!("n={n}: TV {d:.4} ≤ {tol:.4}"));
    }
    let levels = level_distribution(&env, 10, opts)?;
    let mut d = 0.0;
    for (x, row) in levels.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            let f = traj.levels[0].get(&(x, y)).copied().unwrap_or(0) as f64 / paths as f64;
            d += (f - p).abs();
        }
    }
    for (&(x, y), &c) in &traj.levels[0] {
        if levels.get(x).and_then(|r| r.get(y)).is_none() {
            d += c as f64 / paths as f64;
        }
    }
    d *= 0.5;
    let tol = 4.0 * (10.0 / paths as f64).sqrt();
    ok &= d <= tol;
    detail.push(format!("levels n=10: TV {d:.4} ≤ {tol:.4}"));
    Ok((ok, detail.join("; ")))
}

fn clt() -> Outcome {
    let (env, diag) = geometric(2600)?;
    let params = LimitParams::analytic(&env, 0.0)?;
    let report = clt_report(&env, &params, &diag, &[250, 4000], &[], ExactOptions::default())?;
    let (early, late) = (report.positions[0].distance, report.positions[1].distance);
    Ok((late < 0.02 && late < early, format!("Kolmogorov distance n=250: {early:.5}, n=4000: {late:.5}")))
}

fn llt_trend(
    env: &Environment,
    params: &LimitParams,
    diag: &EnvDiagnostics,
    opts: ExactOptions,
) -> Result<Vec<(f64, f64)>, Error> {
    [500, 2000, 8000]
        .iter()
        .map(|&n| llt_report(env, params, diag, n, opts).map(|r| (r.sup_err_scaled, r.uncertainty_scaled)))
        .collect()
}

fn llt() -> Outcome {
    let (env, diag) = geometric(4700)?;
    let params = LimitParams::analytic(&env, 0.0)?;
    let geo = llt_trend(&env, &params, &diag, ExactOptions::default())?;

    let trunc = Truncation::new(100_000, 1e-8)?;
    let pl = Environment::power_law(3.0, 7400, trunc)?;
    let pl_diag = diagnostics(&pl, &Beta::Constant(3.0), pl.len())?;
    let pl_params = fit_limit_params(&pl_diag, 0.0)?.params;
    let pl_err = llt_trend(&pl, &pl_params, &pl_diag, ExactOptions { trunc_tol: 1e-14, deficit_budget: 1e-4 })?;

    let trend = |v: &[(f64, f64)]| v.iter().all(|e| e.0.is_finite()) && v.windows(2).all(|w| w[1].0 < w[0].0);
    let (last, half) = geo[2];
    let ok = trend(&geo) && last < 0.05 + half && trend(&pl_err);
    let fmt = |v: &[(f64, f64)]| v.iter().map(|e| format!("{:.4}(±{:.1e})", e.0, e.1)).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("√n·sup error at n=500,2000,8000 — geometric: {}; power-law β=3: {}", fmt(&geo), fmt(&pl_err))))
}

fn error_decomposition() -> Outcome {
    let (env, diag) = geometric(1000)?;
    let params = LimitParams::analytic(&env, 0.0)?;
    let xs = [50, 200, 800];
    let rows = llt_error_decomposition(&env, &params, &diag, &xs, ExactOptions::default())?;
    let identity = rows.iter().map(|r| (r.e1 + r.e2 + r.e3 + r.h_scaled - r.hitting).abs()).fold(0.0, f64::max);
    let scaled: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let m = rows.iter().filter(|r| r.x == x).map(|r| r.e1.abs()).fold(0.0, f64::max);
            (x as f64).sqrt() * m
        })
        .collect();
    let ok = identity <= 1e-15 && scaled.windows(2).all(|w| w[1] < w[0]);
    Ok((ok, format!("{} rows, telescoping residual {identity:.1e}; √x·max|E1| = {scaled:.5?}", rows.len())))
}

fn slln() -> Outcome {
    let horizon = 100_000;
    let env = Environment::geometric(0.5, horizon + 1, Truncation::default())?;
    let times = vec![1_000, 10_000, 50_000, 75_000, horizon];
    let cfg = McConfig {
        paths: 1_000,
        horizon,
        seed: 7,
        record: Record::Checkpoints { times: times.clone() },
        sampler: Sampler::SojournSum,
    };
    let mc = simulate_paths(&env, &cfg)?;
    let report = slln_report(2.0, &times, &mc, 50_000, 0.02)?;
    let ok = report.fraction_within >= 0.99 && mc.truncated_paths == 0;
    Ok((
        ok,
        format!(
            "{:.1}% of 1000 paths within 0.02 of ½ at n = 10⁵; regression μ = {:.4}",
            100.0 * report.fraction_within,
            report.regression_mu
        ),
    ))
}

fn lsv_bounds() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.25, 0.33, 0.45] {
        let p = LsvParams::from_alpha_c(alpha, 0.5)?;
        let c = lsv_cn_sequence(p, 20_000, 1e-15)?;
        let inv = 1.0 / alpha;
        let middle = p.c.max(p.kappa.powf(-inv) * 2f64.powf(inv + inv * inv));
        let (mut r1, mut r2) = (0.0_f64, 0.0_f64);
        let mut prev = 1.0;
        for (i, &cn) in c.iter().enumerate() {
            let n = (i + 1) as f64;
            let a = n.powf(inv) * cn;
            let b = n.powf(inv + 1.0) * (prev - cn);
            ok &= a <= middle && middle <= p.cn_bound() && b <= p.cn_difference_bound();
            r1 = r1.max(a / p.cn_bound());
            r2 = r2.max(b / p.cn_difference_bound());
            prev = cn;
        }
        detail.push(format!("α={alpha}: max ratios {r1:.3}, {r2:.3}"));
    }
    Ok((ok, format!("n ≤ 20000; {}", detail.join("; "))))
}

fn pipeline(seed: u64, sites: usize) -> Result<String, Error> {
    let model = RandomEnvModel::iid(ParamSampler::PowerLawRange { lo: 2.5, hi: 4.0 }, seed);
    let trunc = Truncation::new(100_000, 1e-8)?;
    let sample = sample_environment(&model, sites, trunc)?;
    let env = &sample.environment;
    let beta = Beta::from_generators(env)?;
    let diag = diagnostics(env, &beta, sites)?;
    let fit = fit_limit_params(&diag, 0.0)?;
    let opts = ExactOptions { trunc_tol: 1e-14, deficit_budget: 1e-4 };
    let llt = llt_report(env, &fit.params, &diag, 150, opts)?;
    let mc = simulate_paths(
        env,
        &McConfig { paths: 200, horizon: 150, seed, record: Record::Endpoint, sampler: Sampler::SojournSum },
    )?;
    Ok([env.to_json()?, json::to_string(&fit)?, json::to_string(&llt)?, json::to_string(&mc.endpoints)?].concat())
}

fn reproducibility() -> Outcome {
    let a = pipeline(11, 220)?;
    let b = pipeline(11, 220)?;
    let model = RandomEnvModel::iid(ParamSampler::PowerLawRange { lo: 2.5, hi: 4.0 }, 11);
    let trunc = Truncation::new(100_000, 1e-8)?;
    let short = sample_environment(&model, 120, trunc)?;
    let long = sample_environment(&model, 480, trunc)?;
    let shift = short.parameter_trace[..] == long.parameter_trace[..120]
        && (0..120).all(|x| short.environment.site(x).ok() == long.environment.site(x).ok());
    Ok((
        a == b && shift,
        format!("two runs: {} bytes each, identical = {}; prefix of 120 sites stable = {shift}", a.len(), a == b),
    ))
}

fn hypothesis_violation() -> Outcome {
    let env = Environment::power_law(1.5, 200, Truncation::default())?;
    let diag = diagnostics(&env, &Beta::Constant(1.5), env.len())?;
    match fit_limit_params(&diag, 0.0) {
        Err(e @ Error::NotConverged(_)) => Ok((true, format!("fit refused: {e}"))),
        Err(e) => Ok((false, format!("unexpected error: {e}"))),
        Ok(fit) => Ok((false, format!("fitted σ² = {} instead of flagging", fit.params.sigma2))),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("moment identities", moment_identities),
        ("walk-dynamics equivalence", walk_dynamics_equivalence),
        ("central limit trend", clt),
        ("local limit trend", llt),
        ("error decomposition", error_decomposition),
        ("strong law", slln),
        ("LSV bounds", lsv_bounds),
        ("quenched reproducibility", reproducibility),
        ("hypothesis violation", hypothesis_violation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        let secs = start.elapsed().as_secs_f64();
        println!("{} {:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
