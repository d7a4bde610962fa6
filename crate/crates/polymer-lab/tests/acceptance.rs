//! Acceptance gate: eleven end-to-end checks, each printing one pass
//! line with its measured numbers (visible under `--nocapture`; the
//! per-test ok/FAILED status carries the same verdict either way).
//! Tolerances and grid parameters are pinned as consts below. Every
//! check is seeded, so reruns are bit-for-bit repeatable.

use polymer_lab::accum::RunningMoments;
use polymer_lab::branching::{
    gw_second_moment_exact, gw_second_moment_limit, BrwSpec, OffspringDist,
};
use polymer_lab::disorder::DisorderDist;
use polymer_lab::polymer::{brute_force_log_partition, EnvField, PolymerModel};
use polymer_lab::replica::second_moment_exact;
use polymer_lab::rng::SeedStream;
use polymer_lab::stats::{
    domination_test, estimate_inf_tail, estimate_moment, f_delta_eps, lp_certificate,
    lp_soundness_chain, neg_moment_certificate, strong_disorder_bound_check, BrwSampler,
    CertificateStatus, GwSampler, MomentEstimate, PathSampler, PolymerSampler, TailEstimate,
    TestFunction, Verdict,
};
use std::time::Instant;

const MASTER_SEED: u64 = 0xACCE;
const DP_ABS_TOL: f64 = 1e-10;
const PRODUCT_REL_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-12;

fn pass(n: u32, name: &str, detail: String) {
    println!("acceptance {n:02} ({name}): pass - {detail}");
}

fn stream(criterion: u64) -> SeedStream {
    SeedStream::new(MASTER_SEED, criterion)
}

/// DP log-partition readout at the full horizon.
fn dp_log_partition(model: &PolymerModel, env: &EnvField, n: usize) -> f64 {
    let (_, slices) = model.slices(env, n).unwrap();
    slices.last().unwrap().log_partition()
}

#[test]
fn c01_dp_matches_brute_force() {
    let started = Instant::now();
    let base = stream(1);
    let mut rng = base.rng();
    let mut max_gap = 0.0f64;
    let mut cases = 0u32;
    for s in 0..100u64 {
        let beta = 0.2 + 1.1 * rng.next_f64();
        let dist = if s % 3 == 2 {
            DisorderDist::gaussian(0.0, 1.0).unwrap()
        } else {
            DisorderDist::rademacher()
        };
        for (dim, n) in [(1usize, 12usize), (2, 6)] {
            let model = PolymerModel::new(dist.clone(), beta, dim, n).unwrap();
            let env = EnvField::new(dist.clone(), &base.substream(1 + dim as u64), s);
            let dp = dp_log_partition(&model, &env, n);
            let brute = brute_force_log_partition(&env, beta, n, dim).unwrap();
            let gap = (dp - brute).abs();
            assert!(
                gap <= DP_ABS_TOL,
                "seed {s} d={dim} n={n} beta={beta}: DP {dp} vs brute {brute}, gap {gap:e}"
            );
            max_gap = max_gap.max(gap);
            cases += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "oracle sweep took {secs:.1}s, budget is 60s");
    pass(
        1,
        "dp vs brute force",
        format!("{cases} cases over 100 seeds, max |log Z| gap {max_gap:.3e}, {secs:.1}s"),
    );
}

#[test]
fn c02_martingale_mean_one_across_grid() {
    const REPS: u64 = 100_000;
    const HORIZON: usize = 15;
    let base = stream(2);
    let mut worst_gap_se = 0.0f64;
    let mut slowest_d3 = 0.0f64;
    for dim in [1usize, 2, 3] {
        for (bi, &beta) in [0.0f64, 0.3, 0.6, 1.0].iter().enumerate() {
            let sampler = PolymerSampler::new(
                DisorderDist::rademacher(),
                beta,
                dim,
                HORIZON,
                base.substream(10 * dim as u64 + bi as u64),
            )
            .unwrap();
            let cell = Instant::now();
            let est = estimate_moment(&sampler, 1.0, HORIZON, REPS).unwrap();
            let secs = cell.elapsed().as_secs_f64();
            let gap = (est.mean - 1.0).abs();
            let budget = 3.0 * est.std_error;
            assert!(
                gap <= budget,
                "d={dim} beta={beta}: mean {} is {gap:e} from 1, 3 SE = {budget:e}",
                est.mean
            );
            if est.std_error > 0.0 {
                worst_gap_se = worst_gap_se.max(gap / est.std_error);
            }
            if dim == 3 {
                assert!(secs < 120.0, "d=3 beta={beta} cell took {secs:.1}s, budget 120s");
                slowest_d3 = slowest_d3.max(secs);
            }
        }
    }
    pass(
        2,
        "martingale mean one",
        format!(
            "12 cells at reps={REPS}, worst |mean-1| = {worst_gap_se:.2} SE, \
             slowest d=3 cell {slowest_d3:.1}s"
        ),
    );
}

#[test]
fn c03_replica_second_moment_exact_vs_mc_and_closed_form() {
    const REPS: u64 = 100_000;
    let dist = DisorderDist::rademacher();
    let beta = 0.5;
    let base = stream(3);
    let sampler = PolymerSampler::new(dist.clone(), beta, 1, 8, base.substream(1)).unwrap();
    let mut worst_se = 0.0f64;
    for n in [1usize, 4, 8] {
        let exact = second_moment_exact(&dist, beta, n, 1).unwrap();
        let est = estimate_moment(&sampler, 2.0, n, REPS).unwrap();
        let gap = (est.mean - exact).abs();
        assert!(
            gap <= 3.0 * est.std_error,
            "n={n}: MC {} vs exact {exact}, gap {gap:e} > 3 SE {:e}",
            est.mean,
            3.0 * est.std_error
        );
        worst_se = worst_se.max(gap / est.std_error);
    }
    // One-step closed form: E[W_1^2] = (1 + e^{gamma2}) / 2 with
    // gamma2 = lambda(2 beta) - 2 lambda(beta), from enumerating the
    // two-walk first step (collide or split, probability 1/2 each).
    let gamma2 = dist.log_mgf(2.0 * beta).unwrap() - 2.0 * dist.log_mgf(beta).unwrap();
    let closed = (1.0 + gamma2.exp()) / 2.0;
    let exact1 = second_moment_exact(&dist, beta, 1, 1).unwrap();
    let gap1 = (exact1 - closed).abs();
    assert!(gap1 <= CLOSED_FORM_TOL, "n=1 recursion {exact1} vs closed form {closed}");
    pass(
        3,
        "replica exactness",
        format!(
            "n in {{1,4,8}} within {worst_se:.2} SE at reps={REPS}; \
             one-step closed-form gap {gap1:.2e}"
        ),
    );
}

#[test]
fn c04_product_identity_residuals() {
    const MAX_SUM: usize = 30;
    const SEEDS: u64 = 20;
    let dist = DisorderDist::rademacher();
    let betas = [0.4f64, 0.8, 1.2];
    let base = stream(4);
    let mut max_residual = 0.0f64;
    let mut checked = 0u64;
    for dim in [1usize, 2, 3] {
        for s in 0..SEEDS {
            let beta = betas[(s % 3) as usize];
            let model = PolymerModel::new(dist.clone(), beta, dim, MAX_SUM).unwrap();
            let env = EnvField::new(dist.clone(), &base.substream(dim as u64), s);
            for m in 1..=MAX_SUM {
                let residuals = model.product_split_residuals(&env, m).unwrap();
                for (k, r) in residuals.iter().enumerate() {
                    assert!(
                        *r <= PRODUCT_REL_TOL,
                        "d={dim} seed {s} beta={beta} split k={k} l={}: residual {r:e}",
                        m - k
                    );
                    max_residual = max_residual.max(*r);
                    checked += 1;
                }
            }
        }
    }
    pass(
        4,
        "product identity",
        format!("{checked} splits with k+l <= {MAX_SUM}, max relative residual {max_residual:.3e}"),
    );
}

#[test]
fn c05_convex_domination_across_models() {
    const REPS: u64 = 100_000;
    const K: usize = 5;
    const L: usize = 5;
    type Cell = (String, Box<dyn PathSampler>, Box<dyn PathSampler>);
    let base = stream(5);
    let fns = [TestFunction::Square, TestFunction::Fourth];
    let mut cells: Vec<Cell> = Vec::new();
    let mut tag = 0u64;
    let sub = |tag: &mut u64| {
        *tag += 1;
        base.substream(*tag)
    };
    for dim in [1usize, 3] {
        for beta in [0.5f64, 1.0] {
            let paired =
                PolymerSampler::new(DisorderDist::rademacher(), beta, dim, K + L, sub(&mut tag))
                    .unwrap();
            let indep =
                PolymerSampler::new(DisorderDist::rademacher(), beta, dim, L, sub(&mut tag))
                    .unwrap();
            cells.push((format!("polymer d={dim} beta={beta}"), Box::new(paired), Box::new(indep)));
        }
    }
    cells.push((
        "gw {1,2}".into(),
        Box::new(GwSampler::new(OffspringDist::one_or_two(), K + L, sub(&mut tag))),
        Box::new(GwSampler::new(OffspringDist::one_or_two(), L, sub(&mut tag))),
    ));
    let spec = BrwSpec::new(OffspringDist::one_or_two(), DisorderDist::rademacher(), 0.3).unwrap();
    cells.push((
        "brw theta=0.3".into(),
        Box::new(BrwSampler::new(spec.clone(), K + L, sub(&mut tag))),
        Box::new(BrwSampler::new(spec, L, sub(&mut tag))),
    ));
    let mut worst_margin = f64::INFINITY;
    let mut tested = 0u32;
    for (label, paired, indep) in &cells {
        for f in fns {
            let rec = domination_test(paired.as_ref(), indep.as_ref(), f, K, L, REPS).unwrap();
            assert_eq!(
                rec.verdict,
                Verdict::Pass,
                "{label} f={f}: lhs {} vs rhs {}, margin {:e}",
                rec.lhs.mean,
                rec.rhs.mean,
                rec.margin
            );
            worst_margin = worst_margin.min(rec.margin);
            tested += 1;
        }
    }
    pass(
        5,
        "convex domination",
        format!(
            "{tested} tests (4 polymer cells, gw, brw; f in {{x^2,x^4}}, k=l=5, reps={REPS}), \
             smallest margin {worst_margin:.3e}"
        ),
    );
}

#[test]
fn c06_gw_second_moment_exact_and_limit() {
    const REPS: u64 = 100_000;
    const HORIZON: usize = 15;
    let off = OffspringDist::one_or_two();
    let limit = gw_second_moment_limit(&off).unwrap();
    let limit_gap = (limit - 4.0 / 3.0).abs();
    assert!(limit_gap <= CLOSED_FORM_TOL, "limit {limit} vs 4/3");
    let exact = gw_second_moment_exact(&off, HORIZON).unwrap();
    let sampler = GwSampler::new(off, HORIZON, stream(6));
    let est = estimate_moment(&sampler, 2.0, HORIZON, REPS).unwrap();
    let gap = (est.mean - exact).abs();
    assert!(
        gap <= 3.0 * est.std_error,
        "MC {} vs exact {exact}, gap {gap:e} > 3 SE {:e}",
        est.mean,
        3.0 * est.std_error
    );
    pass(
        6,
        "gw closed form",
        format!(
            "E[M_{HORIZON}^2]: MC {:.6} vs exact {exact:.6} ({:.2} SE at reps={REPS}); \
             limit gap {limit_gap:.2e}",
            est.mean,
            gap / est.std_error
        ),
    );
}

#[test]
fn c07_lp_certificate_soundness_and_moment_bound() {
    // Part one: pure arithmetic over 1000 random (t, K, tail) inputs.
    let base = stream(7);
    let mut rng = base.rng();
    let mut certified = 0u32;
    let mut refused = 0u32;
    for _ in 0..1000 {
        let t = 2.0f64.powf(0.05 + 5.95 * rng.next_f64());
        let k_const = 1.0 + 5.0 * rng.next_f64();
        let reps = 2_000 + (rng.next_f64() * 18_000.0) as u64;
        let hyp = 1.0 / (4.0 * k_const * k_const * t);
        let hits = (rng.next_f64() * 2.0 * hyp * reps as f64) as u64;
        let tail = TailEstimate::from_counts(t, 20, hits.min(reps), reps);
        let cert = lp_certificate(&tail, k_const).unwrap();
        match cert.status {
            CertificateStatus::Certified => {
                assert!(
                    lp_soundness_chain(&cert),
                    "certified t={t} K={k_const} hits={hits}/{reps} fails the chain"
                );
                certified += 1;
            }
            CertificateStatus::Refused => refused += 1,
        }
    }
    assert!(
        certified >= 10 && refused >= 10,
        "degenerate mix: {certified} certified, {refused} refused"
    );

    // Part two: on the weak-disorder cell, every certificate the tail
    // walk certifies must bound every MC moment E[W_n^{1+eps}], n <= 20.
    const REPS: u64 = 20_000;
    const HORIZON: usize = 20;
    let dist = DisorderDist::rademacher();
    let beta = 0.3;
    let k_const = dist.ratio_bounds(beta).unwrap().k_m();
    let sampler = PolymerSampler::new(dist, beta, 3, HORIZON, base.substream(1)).unwrap();
    let mut paths: Vec<Vec<f64>> = Vec::with_capacity(REPS as usize);
    for r in 0..REPS {
        paths.push(sampler.sample_path(r).unwrap().values);
    }
    let mut walk_certified = 0u32;
    let mut min_headroom = f64::INFINITY;
    for t in [2.0f64, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let hits = paths.iter().filter(|w| w.iter().any(|&x| x > t)).count() as u64;
        let tail = TailEstimate::from_counts(t, HORIZON, hits, REPS);
        let cert = lp_certificate(&tail, k_const).unwrap();
        if cert.status != CertificateStatus::Certified {
            continue;
        }
        assert!(lp_soundness_chain(&cert), "measured certificate at t={t} fails the chain");
        walk_certified += 1;
        let p = cert.exponent;
        for n in 0..=HORIZON {
            let mut acc = RunningMoments::new();
            for w in &paths {
                acc.push(w[n].powf(p));
            }
            let est = MomentEstimate::from_moments(format!("moment(p={p}, n={n})"), acc);
            let slack = est.mean - 3.0 * est.std_error;
            assert!(
                slack <= cert.bound,
                "t={t}: bound {} below MC E[W_{n}^{p}] = {} - 3 SE",
                cert.bound,
                est.mean
            );
            min_headroom = min_headroom.min(cert.bound - slack);
        }
    }
    assert!(walk_certified >= 1, "no threshold t <= 64 certified on the weak-disorder cell");
    pass(
        7,
        "lp certificate soundness",
        format!(
            "1000 random inputs ({certified} certified, {refused} refused, zero chain failures); \
             {walk_certified} measured certificates bound all n <= {HORIZON} moments, \
             min headroom {min_headroom:.3e}"
        ),
    );
}

#[test]
fn c08_strong_disorder_trend_and_floor_report() {
    const REPS: u64 = 100_000;
    const HORIZON: usize = 200;
    let dist = DisorderDist::rademacher();
    let beta = 1.0;
    let k_const = dist.ratio_bounds(beta).unwrap().k_m();
    let sampler = PolymerSampler::new(dist, beta, 1, HORIZON, stream(8)).unwrap();
    let mut lines = Vec::new();
    for t in [2.0f64, 5.0] {
        let report = strong_disorder_bound_check(&sampler, t, HORIZON, REPS, k_const).unwrap();
        assert!(
            report.trend_ok,
            "t={t}: hits fell from {} at n={} to {} at n={HORIZON} on shared seeds",
            report.half_tail.hit_count, report.half_tail.horizon, report.tail.hit_count
        );
        assert_eq!(report.tail.sample_count, REPS);
        assert!(!report.note.is_empty() && report.floor.is_finite());
        lines.push(format!(
            "t={t}: P(sup W > t) = {:.4} [{:.4}, {:.4}] vs floor {:.4} ({})",
            report.tail.point(),
            report.tail.lower_conf,
            report.tail.upper_conf,
            report.floor,
            if report.consistent { "consistent" } else { "finite-horizon shortfall" }
        ));
    }
    pass(
        8,
        "strong disorder report",
        format!("d=1 beta=1 n={HORIZON} reps={REPS}, monotone trend exact; {}", lines.join("; ")),
    );
}

#[test]
fn c09_negative_moment_certificate() {
    const REPS: u64 = 20_000;
    const HORIZON: usize = 20;
    let dist = DisorderDist::rademacher();
    let beta = 0.3;
    let k_const = dist.ratio_bounds(beta).unwrap().k_m();
    let base = stream(9);
    let sampler = PolymerSampler::new(dist.clone(), beta, 3, HORIZON, base.substream(0)).unwrap();
    let mut chosen = None;
    for t in [2.0f64, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let tail = estimate_inf_tail(&sampler, t, HORIZON, REPS).unwrap();
        let cert = neg_moment_certificate(&tail, k_const).unwrap();
        if cert.status == CertificateStatus::Certified {
            chosen = Some(cert);
            break;
        }
    }
    let cert = chosen.expect("no threshold t <= 64 certified a negative moment");
    let mut worst = 0.0f64;
    for n in [5usize, 10, 20] {
        let s = PolymerSampler::new(dist.clone(), beta, 3, n, base.substream(n as u64)).unwrap();
        let est = estimate_moment(&s, cert.exponent, n, REPS).unwrap();
        assert!(
            est.mean <= cert.bound + 3.0 * est.std_error,
            "n={n}: MC E[W^{}] = {} exceeds bound {} + 3 SE",
            cert.exponent,
            est.mean,
            cert.bound
        );
        worst = worst.max(est.mean);
    }
    pass(
        9,
        "negative moments",
        format!(
            "certified at t={} (eps={:.4}, bound {:.4}); \
             max MC E[W_n^-eps] = {worst:.4} over n in {{5,10,20}} at reps={REPS}",
            cert.threshold, cert.epsilon, cert.bound
        ),
    );
}

#[test]
fn c10_ramp_sandwich_pointwise() {
    let base = stream(10);
    let mut rng = base.rng();
    let mut violations = 0u32;
    for _ in 0..10_000 {
        let delta = 10f64.powf(-3.0 + 3.0 * rng.next_f64());
        let eps = 10f64.powf(-3.0 + 3.0 * rng.next_f64());
        let x = rng.next_f64() * (1.0 / delta + 2.0) * eps;
        let f = f_delta_eps(delta, eps, x);
        let upper = if x >= eps { 1.0 } else { 0.0 };
        let lower = if x >= (1.0 / delta + 1.0) * eps { 1.0 } else { 0.0 }
            - if x <= eps { delta } else { 0.0 };
        if !(f <= upper && f >= lower) {
            violations += 1;
            eprintln!("violation: delta={delta} eps={eps} x={x}: {lower} <= {f} <= {upper}");
        }
    }
    assert_eq!(violations, 0);
    pass(10, "ramp sandwich", "10000 random (delta, eps, x), zero violations".into());
}

#[test]
fn c11_byte_identical_csv_across_worker_counts() {
    let bin = env!("CARGO_BIN_EXE_polymer-lab");
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("branching.cfg");
    std::fs::write(
        &cfg_path,
        "model = gw\noffspring = [(0,0.25),(1,0.25),(2,0.5)]\nhorizon = 12\nreps = 5000\n\
         seed = 31\nstats = mean,second-moment,second-moment-exact\n",
    )
    .unwrap();
    let run = |label: &str, extra_args: &[&str], env: Option<(&str, &str)>| -> Vec<Vec<u8>> {
        let polymer_out = root.path().join(format!("polymer-{label}"));
        let gw_out = root.path().join(format!("gw-{label}"));
        let mut cmd = std::process::Command::new(bin);
        cmd.args([
            "scan",
            "--out",
            polymer_out.to_str().unwrap(),
            "--seed",
            "5",
            "--beta",
            "0.3,0.9",
            "--horizon",
            "10",
            "--reps",
            "5000",
            "--stat",
            "mean,second-moment,sup-tail:1.5,inf-tail:4",
        ])
        .args(extra_args)
        .env_remove("POLYMER_LAB_WORKERS");
        if let Some((k, v)) = env {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "polymer scan {label}: {:?}", out.status.code());
        let mut cmd = std::process::Command::new(bin);
        cmd.args([
            "scan",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            gw_out.to_str().unwrap(),
        ])
        .args(extra_args)
        .env_remove("POLYMER_LAB_WORKERS");
        if let Some((k, v)) = env {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "gw scan {label}: {:?}", out.status.code());
        vec![
            std::fs::read(polymer_out.join("results.csv")).unwrap(),
            std::fs::read(gw_out.join("results.csv")).unwrap(),
        ]
    };
    let w1 = run("w1", &["--workers", "1"], None);
    let w2 = run("w2", &["--workers", "2"], None);
    let w3 = run("w3", &["--workers", "3"], None);
    let env2 = run("env2", &[], Some(("POLYMER_LAB_WORKERS", "2")));
    assert!(!w1[0].is_empty() && !w1[1].is_empty());
    for (csvs, label) in [(&w2, "workers=2"), (&w3, "workers=3"), (&env2, "env workers=2")] {
        assert_eq!(w1[0], csvs[0], "polymer CSV differs at {label}");
        assert_eq!(w1[1], csvs[1], "gw CSV differs at {label}");
    }
    pass(
        11,
        "determinism",
        "polymer and gw scans byte-identical at worker counts 1, 2, 3 and via env override".into(),
    );
}
