//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion fails.
//!
//! Set `STACP_GOWALLA` to a Gowalla check-in dump to run the full-data
//! reproduction; otherwise it is reported as not run.

use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use stacp::config::ExperimentConfig;
use stacp::eval::Metric;
use stacp::experiment::{run_experiment, run_sweep, Stage, SweepAxis, SweepSpec};
use stacp::pipeline::Method;
use stacp::stats::paired_ttest;
use stacp::synth::{generate, SynthSpec};
use stacp_core::factorization::FactorModel;
use stacp_core::{
    allocate_centers, allocate_regions, context_score, gradient, haversine_km, ndcg_at, objective, precision_at,
    recall_at, state_center_score, train_observed, ActivityCenter, CenterConfig, ContextConfig, GeoPoint,
    InteractionMatrix, TemporalState, TrainConfig,
};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "metric oracle", limit: Duration::from_secs(1), run: metric_oracle },
        Criterion { name: "gradient check", limit: Duration::from_secs(10), run: gradient_check },
        Criterion { name: "trainer contract", limit: Duration::from_secs(30), run: trainer_contract },
        Criterion { name: "center allocation invariants", limit: Duration::from_secs(5), run: center_invariants },
        Criterion { name: "center/context brute force", limit: Duration::from_secs(1), run: center_brute_force },
        Criterion { name: "synthetic directional check", limit: Duration::from_secs(300), run: synthetic_directional },
        Criterion { name: "lambda sweep shape", limit: Duration::from_secs(600), run: lambda_sweep },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; took {elapsed:.2?}, limit {:?}", c.limit)),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS  {:<32} {detail} [{elapsed:.2?}]", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:<32} {detail} [{elapsed:.2?}]", c.name);
            }
        }
    }
    match gowalla_reproduction() {
        None => println!("SKIP  {:<32} not run: STACP_GOWALLA not set (optional full-data criterion)", "gowalla reproduction"),
        Some(Ok(d)) => println!("PASS  {:<32} {d}", "gowalla reproduction"),
        Some(Err(d)) => {
            failed += 1;
            println!("FAIL  {:<32} {d}", "gowalla reproduction");
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn reference_metrics(recs: &[usize], relevant: &[usize], n: usize) -> (f64, f64, f64) {
    let top: Vec<usize> = recs.iter().take(n).copied().collect();
    let rel: std::collections::BTreeSet<usize> = relevant.iter().copied().collect();
    let hits = top.iter().filter(|l| rel.contains(l)).count();
    let gain = |rank: usize| 1.0 / (rank as f64 + 1.0).log2();
    let dcg: f64 = (1..=top.len()).filter(|&r| rel.contains(&top[r - 1])).map(gain).sum();
    // best DCG over every set of hit positions the cutoff and relevant set allow
    let mut idcg: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize > rel.len() {
            continue;
        }
        let v: f64 = (1..=n).filter(|r| mask & (1 << (r - 1)) != 0).map(gain).sum();
        idcg = idcg.max(v);
    }
    (hits as f64 / n as f64, hits as f64 / rel.len() as f64, dcg / idcg)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..200 {
        let n_cand = rng.random_range(1..=10);
        let mut recs: Vec<usize> = (0..n_cand).collect();
        recs.shuffle(&mut rng);
        let n_test = rng.random_range(1..=5);
        // relevant items may fall outside the candidate list
        let relevant: Vec<usize> = (0..14).collect::<Vec<_>>().choose_multiple(&mut rng, n_test).copied().collect();
        let n = rng.random_range(1..=10);
        let got = (
            precision_at(&recs, &relevant, n).map_err(|e| e.to_string())?,
            recall_at(&recs, &relevant, n).map_err(|e| e.to_string())?,
            ndcg_at(&recs, &relevant, n).map_err(|e| e.to_string())?,
        );
        let want = reference_metrics(&recs, &relevant, n);
        ensure(got == want, || format!("instance {i}: got {got:?}, reference {want:?}"))?;
    }
    let rank2 = ndcg_at(&[5, 9, 1, 2, 3, 4, 6, 7, 8, 0], &[9], 10).map_err(|e| e.to_string())?;
    let expect = 1.0 / 3f64.log2();
    ensure((rank2 - expect).abs() <= 1e-12, || format!("rank-2 nDCG {rank2} vs {expect}"))?;
    Ok(format!("200 instances exact; rank-2 nDCG {rank2:.12}"))
}

// ---------------------------------------------------------- factorization

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> InteractionMatrix {
    let mut t = Vec::new();
    for u in 0..m {
        for l in 0..n {
            if rng.random::<f64>() < density {
                t.push((u, l, rng.random_range(1..6u32)));
            }
        }
    }
    InteractionMatrix::from_triplets(m, n, t).expect("valid triplets")
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..50 {
        let m = rng.random_range(1..=20);
        let n = rng.random_range(1..=30);
        let k = rng.random_range(1..=5);
        let r = random_matrix(&mut rng, m, n, 0.3);
        let mut model = FactorModel::init(m, n, &TrainConfig { k, seed: rng.random(), ..TrainConfig::default() });
        for x in model.user_factors.iter_mut().chain(model.poi_factors.iter_mut()) {
            *x = rng.random_range(0.2..1.5);
        }
        model.sigma = (0..k).map(|_| rng.random_range(1.0..3.0)).collect();
        model.rho = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
        let g = gradient(&model, &r).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = g.user.iter().chain(&g.poi).copied().collect();
        let n_user = model.user_factors.len();
        for (idx, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let (p, q) = if idx < n_user {
                (&mut plus.user_factors[idx], &mut minus.user_factors[idx])
            } else {
                (&mut plus.poi_factors[idx - n_user], &mut minus.poi_factors[idx - n_user])
            };
            *p += h;
            *q -= h;
            let fd = (objective(&plus, &r).unwrap() - objective(&minus, &r).unwrap()) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs());
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("50 instances, max relative error {worst:.2e}"))
}

fn trainer_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0usize;
    for seed in 0..100u64 {
        let r = random_matrix(&mut rng, 10, 10, 0.4);
        let cfg = TrainConfig { k: 5, max_epochs: 100, learning_rate: 1e-2, seed, ..TrainConfig::default() };
        let mut prev = f64::NEG_INFINITY;
        let mut violation = None;
        let (model, report) = train_observed(&r, &cfg, |model, value| {
            steps += 1;
            if value < prev - 1e-12 * prev.abs().max(1.0) {
                violation.get_or_insert(format!("seed {seed}: objective fell {prev} -> {value}"));
            }
            prev = value;
            if let Some(x) = model.user_factors.iter().chain(&model.poi_factors).find(|&&x| !(x >= cfg.floor)) {
                violation.get_or_insert(format!("seed {seed}: factor entry {x} below floor"));
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(v) = violation {
            return Err(v);
        }
        ensure(report.objective_trace.windows(2).all(|w| w[1] >= w[0]), || format!("seed {seed}: trace not monotone"))?;
        ensure(model.user_factors.iter().chain(&model.poi_factors).all(|&x| x >= cfg.floor), || format!("seed {seed}: final model below floor"))?;
    }
    Ok(format!("100 runs, {steps} accepted steps checked"))
}

// ---------------------------------------------------------------- centers

fn random_point(rng: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(40.0 + rng.random_range(-0.5..0.5), -74.0 + rng.random_range(-0.5..0.5)).unwrap()
}

fn hand_trace() -> Result<(), String> {
    let coords = [
        GeoPoint::new(0.0, 0.0).unwrap(),
        GeoPoint::new(0.0, 0.05).unwrap(),
        GeoPoint::new(1.0, 1.0).unwrap(),
    ];
    let c = allocate_centers(&[(0, 10), (1, 5), (2, 1)], &coords, &CenterConfig { d: 15.0, alpha: 0.02 }, TemporalState::Working);
    let got: Vec<(usize, u64, Vec<usize>)> = c.iter().map(|c| (c.anchor, c.freq, c.member_pois.clone())).collect();
    let want = vec![(0, 15, vec![0, 1]), (2, 1, vec![2])];
    ensure(got == want, || format!("hand trace: got {got:?}, want {want:?}"))
}

fn center_invariants() -> Outcome {
    hand_trace()?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..500 {
        let n_poi = rng.random_range(1..=30);
        let coords: Vec<GeoPoint> = (0..n_poi).map(|_| random_point(&mut rng)).collect();
        let mut profile: Vec<(usize, u64)> = Vec::new();
        for l in 0..n_poi {
            if rng.random::<f64>() < 0.7 {
                profile.push((l, rng.random_range(1..=20)));
            }
        }
        if profile.is_empty() {
            continue;
        }
        let cfg = CenterConfig { d: rng.random_range(0.5..60.0), alpha: rng.random_range(0.001..0.3) };
        let regions = allocate_regions(&profile, &coords, &cfg, TemporalState::Leisure);
        let total: u64 = profile.iter().map(|p| p.1).sum();
        let mut seen: Vec<usize> = Vec::new();
        for r in &regions {
            let c = &r.center;
            let freq: u64 = c.member_pois.iter().map(|&l| profile.iter().find(|p| p.0 == l).unwrap().1).sum();
            ensure(freq == c.freq, || format!("profile {i}: region frequency mismatch"))?;
            ensure(c.member_pois.iter().all(|&l| haversine_km(coords[l], c.location) <= cfg.d), || format!("profile {i}: member beyond d"))?;
            ensure(r.is_center == (c.freq as f64 / total as f64 > cfg.alpha), || format!("profile {i}: threshold test wrong"))?;
            seen.extend(&c.member_pois);
        }
        seen.sort_unstable();
        let mut expect: Vec<usize> = profile.iter().map(|p| p.0).collect();
        expect.sort_unstable();
        ensure(seen == expect, || format!("profile {i}: regions do not partition the profile"))?;
        let centers = allocate_centers(&profile, &coords, &cfg, TemporalState::Leisure);
        ensure(centers.iter().all(|c| c.freq as f64 / total as f64 > cfg.alpha), || format!("profile {i}: center below alpha"))?;
        let mut shuffled = profile.clone();
        shuffled.shuffle(&mut rng);
        ensure(allocate_centers(&shuffled, &coords, &cfg, TemporalState::Leisure) == centers, || format!("profile {i}: not deterministic"))?;
    }
    Ok("500 profiles; hand trace exact".into())
}

fn reference_haversine(p: GeoPoint, q: GeoPoint) -> f64 {
    let (la1, la2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (q.lon - p.lon).to_radians();
    let a = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * 6371.0 * a.sqrt().min(1.0).asin()
}

fn reference_state_score(l: GeoPoint, centers: &[ActivityCenter]) -> f64 {
    let total: f64 = centers.iter().map(|c| c.freq as f64).sum();
    let mut s = 0.0;
    for c in centers {
        s += (1.0 / reference_haversine(l, c.location).max(0.01)) * (c.freq as f64 / total);
    }
    s
}

fn center_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let random_centers = |rng: &mut ChaCha8Rng, state| -> Vec<ActivityCenter> {
        (0..rng.random_range(1..=5))
            .map(|i| ActivityCenter { location: random_point(rng), anchor: i, freq: rng.random_range(1..50), member_pois: vec![i], state })
            .collect()
    };
    for _ in 0..1000 {
        let working = random_centers(&mut rng, TemporalState::Working);
        let leisure = random_centers(&mut rng, TemporalState::Leisure);
        let l = if rng.random::<f64>() < 0.1 { working[0].location } else { random_point(&mut rng) };
        let lambda: f64 = rng.random();
        let pw = reference_state_score(l, &working);
        let pl = reference_state_score(l, &leisure);
        let pairs = [
            (state_center_score(l, &working), pw),
            (context_score(l, &working, &leisure, &ContextConfig { lambda }), lambda * pw + (1.0 - lambda) * pl),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("1000 center sets, max relative deviation {worst:.1e}"))
}

// -------------------------------------------------------------- synthetic

const SEEDS: u64 = 5;

fn synth_spec(seed: u64) -> SynthSpec {
    SynthSpec { users: 50, pois: 200, centers_per_state: 2, visits_per_user: 100, seed, ..SynthSpec::default() }
}

fn synth_config(seed: u64, methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig { seed, methods, cutoffs: vec![10], ..ExperimentConfig::default() }
}

fn synthetic_directional() -> Outcome {
    let methods = vec![Method::Stacp, Method::NoCtx, Method::NoTc];
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    for seed in 0..SEEDS {
        let data = generate(&synth_spec(seed)).map_err(|e| e.to_string())?;
        let cfg = synth_config(seed, methods.clone());
        let spec = SweepSpec { axis: SweepAxis::Lambda, grid: vec![cfg.context.lambda] };
        let points = run_sweep(&cfg, &spec, &data.checkins).map_err(|e| e.to_string())?;
        for (i, &m) in methods.iter().enumerate() {
            pooled[i].extend(&points[0].report.series(m, Metric::Recall, 10).expect("series").per_user);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (full, no_ctx, no_tc) = (mean(&pooled[0]), mean(&pooled[1]), mean(&pooled[2]));
    let t_ctx = paired_ttest(&pooled[0], &pooled[1]).map_err(|e| e.to_string())?;
    let t_tc = paired_ttest(&pooled[0], &pooled[2]).map_err(|e| e.to_string())?;
    let detail = format!(
        "Recall@10 stacp {full:.4}, no-ctx {no_ctx:.4} (p={:.2e}), no-tc {no_tc:.4} (p={:.2e}); {} user-seed pairs",
        t_ctx.p,
        t_tc.p,
        pooled[0].len()
    );
    ensure(full > no_ctx && full > no_tc && t_ctx.significant, || detail.clone())?;
    Ok(detail)
}

fn lambda_sweep() -> Outcome {
    let grid = vec![0.0, 0.5, 1.0];
    let mut sums = vec![0.0; grid.len()];
    for seed in 0..SEEDS {
        let data = generate(&synth_spec(seed)).map_err(|e| e.to_string())?;
        let cfg = synth_config(seed, vec![Method::Stacp]);
        let points = run_sweep(&cfg, &SweepSpec { axis: SweepAxis::Lambda, grid: grid.clone() }, &data.checkins).map_err(|e| e.to_string())?;
        for (s, p) in sums.iter_mut().zip(&points) {
            *s += p.report.mean(Method::Stacp, Metric::Recall, 10).expect("series") / SEEDS as f64;
        }
    }
    let detail = format!("mean Recall@10 at lambda 0: {:.4}, 0.5: {:.4}, 1: {:.4}", sums[0], sums[1], sums[2]);
    ensure(sums[1] > sums[0] && sums[1] > sums[2], || detail.clone())?;
    Ok(detail)
}

// ----------------------------------------------------------------- gowalla

fn gowalla_reproduction() -> Option<Outcome> {
    let path = std::env::var_os("STACP_GOWALLA")?;
    let out = std::env::temp_dir().join("stacp-gowalla-acceptance");
    let mut cfg = ExperimentConfig { out, methods: vec![Method::Stacp], ..ExperimentConfig::default() };
    cfg.dataset.path = Some(path.into());
    cfg.dataset.profile = "gowalla".into();
    let run = match run_experiment(&cfg, Stage::Evaluate) {
        Ok(r) => r,
        Err(e) => return Some(Err(e.to_string())),
    };
    let report = run.report.expect("evaluate stage produces a report");
    let p10 = report.mean(Method::Stacp, Metric::Precision, 10).unwrap_or(f64::NAN);
    let r20 = report.mean(Method::Stacp, Metric::Recall, 20).unwrap_or(f64::NAN);
    let detail = format!("Precision@10 {p10:.4} (target 0.0383 +/-20%), Recall@20 {r20:.4} (target 0.0651 +/-20%)");
    let within = |v: f64, target: f64| (v - target).abs() <= 0.2 * target;
    Some(if within(p10, 0.0383) && within(r20, 0.0651) { Ok(detail) } else { Err(detail) })
}
