//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria marked `gating` fail the process; the others are measured and
//! reported but not enforced (desk-scale versions of full-scale claims).
//! Set `RISGUARD_FULL_SCALE=1` to run the long full-scale trajectory check.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risguard::algorithms::{run_mode, Mode, RunStatus, Stage, StepStatus};
use risguard::harness::{detection_oracle, run_experiment, RealizationResult};
use risguard::linalg::{kron, vec_of, CMat, CVec};
use risguard::metrics::{averaged_probabilities, detection_threshold, fa_probability, md_probability};
use risguard::scenario::build_scenario;
use risguard::surrogates::{
    column_minorant, cross_majorant, im_inner_polarized, norm_sq_tangent, re_inner_polarized, response_minorant,
    stack_psi,
};
use risguard::{AlgorithmSettings, ExperimentSpec, RunOutcome, ScenarioConfig};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
}

fn report(v: &Verdict, secs: f64) {
    let tag = match (v.pass, v.gating) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (reported, not gating)",
    };
    println!("criterion {:>2} [{}] {}: {} ({:.1}s)", v.id, tag, v.name, v.detail, secs);
}

fn rand_c<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_vec<R: Rng>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| rand_c(rng))
}

fn rand_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> CMat {
    CMat::from_fn(r, c, |_, _| rand_c(rng))
}

fn criterion1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0);
    for gamma in [0.1, 1.0, 3.0, 10.0] {
        for ts in [1, 2, 5, 10] {
            let (w0, w1) = (1.0, 1.0 + gamma);
            let thresh = detection_threshold(w0, w1).unwrap();
            let (p, q) = averaged_probabilities(gamma, ts).unwrap();
            let est = detection_oracle(w0, w1, thresh, ts, trials, &mut rng);
            let sp = (p * (1.0 - p) / trials as f64).sqrt();
            let sq = (q * (1.0 - q) / trials as f64).sqrt();
            for z in [(est.p_hat - p).abs() / sp, (est.q_hat - q).abs() / sq] {
                if z > worst {
                    worst = z;
                    worst_at = (gamma, ts);
                }
            }
        }
    }
    Verdict {
        id: 1,
        name: "detection closed forms vs Monte Carlo oracle",
        pass: worst <= 3.0,
        gating: true,
        detail: format!("max |z| = {worst:.2} (limit 3) at gamma = {}, tS = {}, 1e5 trials", worst_at.0, worst_at.1),
    }
}

fn criterion2() -> Verdict {
    let e_inv = (-1.0f64).exp();
    let fa0 = (fa_probability(0.0).unwrap() - e_inv).abs();
    let md0 = (md_probability(0.0).unwrap() - (1.0 - e_inv)).abs();
    let (p200, q200) = averaged_probabilities(0.0, 200).unwrap();
    let pass = fa0 <= 1e-9 && md0 <= 1e-9 && (p200 - 0.5).abs() <= 0.02 && (q200 - 0.5).abs() <= 0.02;
    Verdict {
        id: 2,
        name: "worst-case detection limits",
        pass,
        gating: true,
        detail: format!("|p(0) - 1/e| = {fa0:.1e}, |q(0) - (1 - 1/e)| = {md0:.1e}, tS=200: p = {p200:.4}, q = {q200:.4}"),
    }
}

fn criterion3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (m, nr, k) = (2, 4, 2);
    let mut min_slack = f64::INFINITY;
    let mut max_tight: f64 = 0.0;
    let mut min_major = f64::INFINITY;
    let mut max_ident: f64 = 0.0;
    for _ in 0..1000 {
        let a = rand_vec(nr, &mut rng);
        let g = rand_mat(nr, m, &mut rng);
        let (w, phi) = (rand_mat(m, k, &mut rng), rand_vec(nr, &mut rng));
        let (w0, phi0) = (rand_mat(m, k, &mut rng), rand_vec(nr, &mut rng));
        let psi = stack_psi(&w, &phi);
        let psi0 = stack_psi(&w0, &phi0);
        // dense reference: a^H diag(phi) G W
        let direct = |w: &CMat, phi: &CVec| (a.adjoint() * CMat::from_diagonal(phi) * &g * w).transpose();
        let truth = direct(&w, &phi);
        let truth0 = direct(&w0, &phi0);
        let t_all = truth.norm_squared();
        let t0_all = truth0.norm_squared();

        let om = response_minorant(&a, &g, &psi0).unwrap();
        min_slack = min_slack.min((t_all - om.eval(&psi)) / t_all.max(1.0));
        max_tight = max_tight.max((om.eval(&psi0) - t0_all).abs() / t0_all);
        for kk in 0..k {
            let cm = column_minorant(&a, kk, &g, &psi0).unwrap();
            let t = truth[kk].norm_sqr();
            min_slack = min_slack.min((t - cm.eval(&psi)) / t.max(1.0));
            max_tight = max_tight.max((cm.eval(&psi0) - truth0[kk].norm_sqr()).abs() / truth0[kk].norm_sqr());
            let maj = cross_majorant(&a, kk, &g, &psi0).unwrap();
            let (rho, zeta) = maj.minimal_slacks(&psi);
            min_major = min_major.min((rho * rho + zeta * zeta - t) / t.max(1.0));
        }

        let (v1, v2) = (rand_vec(6, &mut rng), rand_vec(6, &mut rng));
        let scale = v1.norm() * v2.norm();
        let ip = v1.dotc(&v2);
        max_ident = max_ident.max((re_inner_polarized(&v1, &v2) - ip.re).abs() / scale);
        max_ident = max_ident.max((im_inner_polarized(&v1, &v2) - ip.im).abs() / scale);
        // tangent bound: ‖v‖² ≥ 2Re{v0^H v} − ‖v0‖²
        if norm_sq_tangent(&v2, &v1) > v2.norm_squared() + 1e-12 * scale {
            max_ident = f64::INFINITY;
        }
        let (a1, a2) = (rand_mat(3, 4, &mut rng), rand_mat(4, 2, &mut rng));
        let lhs = vec_of(&(&a1 * &a2));
        let rhs = kron(&a2.transpose(), &CMat::identity(3, 3)) * vec_of(&a1);
        max_ident = max_ident.max((lhs - rhs).norm() / (a1.norm() * a2.norm()));
    }
    let pass = min_slack >= -1e-9 && max_tight <= 1e-9 && min_major >= -1e-9 && max_ident <= 1e-12;
    Verdict {
        id: 3,
        name: "surrogate correctness on 1000 random pairs",
        pass,
        gating: true,
        detail: format!(
            "min minorant slack {min_slack:.2e}, max tightness error {max_tight:.2e}, min majorant gap {min_major:.2e}, max identity error {max_ident:.2e}"
        ),
    }
}

fn desk_runs(seeds: std::ops::RangeInclusive<u64>) -> Vec<(u64, RunOutcome)> {
    let settings = AlgorithmSettings::default();
    seeds
        .map(|seed| {
            let mut cfg = ScenarioConfig::desk();
            cfg.seed = seed;
            let sc = build_scenario(&cfg).unwrap();
            (seed, run_mode(&sc, &cfg, &settings, Mode::ProposedAdaptive).unwrap())
        })
        .collect()
}

fn criterion4(runs: &[(u64, RunOutcome)]) -> Verdict {
    let mut worst = f64::INFINITY;
    let mut worst_seed = 0;
    let mut checked = 0;
    for (seed, run) in runs {
        let recs = &run.trace.records;
        for i in 1..recs.len() {
            let r = &recs[i];
            if r.stage == Stage::Psi && r.status == StepStatus::Accepted {
                let prev = recs[i - 1].interference;
                let rel = (r.interference - prev) / prev;
                checked += 1;
                if rel < worst {
                    worst = rel;
                    worst_seed = *seed;
                }
            }
        }
    }
    Verdict {
        id: 4,
        name: "SCA ascent of the true interference",
        pass: worst >= -1e-6,
        gating: true,
        detail: format!("{checked} accepted iterates over {} seeds, worst relative step {worst:.2e} (seed {worst_seed}, limit -1e-6)", runs.len()),
    }
}

fn criterion5(runs: &[(u64, RunOutcome)]) -> Verdict {
    let converged: Vec<_> = runs.iter().filter(|(_, r)| r.status == RunStatus::Converged).collect();
    let bad: Vec<u64> = converged
        .iter()
        .filter(|(_, r)| !r.audit.holds(1e-6, 1e-6, 1e-3, 1e-6))
        .map(|(s, _)| *s)
        .collect();
    let worst_mod = converged.iter().map(|(_, r)| r.audit.modulus_deviation).fold(0.0, f64::max);
    let worst_s = converged.iter().map(|(_, r)| r.audit.sensing_margin).fold(f64::INFINITY, f64::min);
    let worst_c = converged.iter().map(|(_, r)| r.audit.comm_margin).fold(f64::INFINITY, f64::min);
    Verdict {
        id: 5,
        name: "feasibility at convergence",
        pass: bad.is_empty() && !converged.is_empty(),
        gating: true,
        detail: format!(
            "{}/{} runs converged, violations {:?}, worst sensing margin {worst_s:.2e}, worst comm margin {worst_c:.2e}, worst |phi| deviation {worst_mod:.1e}",
            converged.len(),
            runs.len(),
            bad
        ),
    }
}

fn criterion6(runs: &[(u64, RunOutcome)]) -> Verdict {
    let mut bad = Vec::new();
    for (seed, run) in runs {
        let nrs: Vec<usize> = run.trace.records.iter().map(|r| r.nr).collect();
        let monotone = nrs.windows(2).all(|w| w[0] <= w[1]);
        if !monotone || !run.partition.is_valid() || run.partition.nr() + run.partition.na() != run.partition.n() {
            bad.push(*seed);
        }
    }
    let grown = runs.iter().filter(|(_, r)| r.partition.nr() > ScenarioConfig::desk().initial_reflecting).count();
    Verdict {
        id: 6,
        name: "partition monotonicity",
        pass: bad.is_empty(),
        gating: true,
        detail: format!("violations {:?}, {grown}/{} runs grew R", bad, runs.len()),
    }
}

fn paired_gap(a: &[RealizationResult], b: &[RealizationResult]) -> (f64, usize) {
    let mut diffs = Vec::new();
    for (x, y) in a.iter().zip(b) {
        if let (
            RealizationResult::Completed { max_detector_sinr_db: dx, .. },
            RealizationResult::Completed { max_detector_sinr_db: dy, .. },
        ) = (x, y)
        {
            diffs.push(dy - dx);
        }
    }
    let n = diffs.len();
    (diffs.iter().sum::<f64>() / n.max(1) as f64, n)
}

fn campaign(mode: Mode) -> Vec<RealizationResult> {
    let cfg = ScenarioConfig::desk().with_dims(4, 16, 2, (2, 2));
    let spec = ExperimentSpec::new(cfg, mode, 50);
    run_experiment(&spec).unwrap().points.remove(0).realizations
}

fn criterion7(adaptive: &[RealizationResult], baseline: &[RealizationResult]) -> Verdict {
    let (gap, n) = paired_gap(adaptive, baseline);
    Verdict {
        id: 7,
        name: "protection gap vs sensing-max baseline (M=4, N=16, K=2, L=4, 40 dBm)",
        pass: gap >= 10.0 && n >= 50,
        gating: false,
        detail: format!("paired mean gap {gap:.2} dB over {n} realizations (target >= 10 dB)"),
    }
}

fn criterion8(adaptive: &[RealizationResult], fixed: &[RealizationResult]) -> Verdict {
    let (gap, n) = paired_gap(adaptive, fixed);
    Verdict {
        id: 8,
        name: "adaptive vs fixed partition",
        pass: gap >= 1.0,
        gating: true,
        detail: format!("paired mean gap {gap:.2} dB over {n} realizations (target >= 1 dB)"),
    }
}

fn criterion9() -> Option<Verdict> {
    if std::env::var("RISGUARD_FULL_SCALE").map_or(true, |v| v != "1") {
        return None;
    }
    let cfg = ScenarioConfig::default();
    let sc = build_scenario(&cfg).unwrap();
    let run = run_mode(&sc, &cfg, &AlgorithmSettings::default(), Mode::ProposedAdaptive).unwrap();
    let first = run.trace.records.iter().find(|r| r.stage == Stage::Psi).map_or(f64::NAN, |r| r.max_detector_sinr_db);
    let last = 10.0 * run.max_detector_sinr.log10();
    let nr = run.partition.nr();
    let pass = (first - 10.0).abs() <= 3.0 && (last + 7.0).abs() <= 3.0 && (50..=60).contains(&nr);
    Some(Verdict {
        id: 9,
        name: "full-scale trajectory (M=4, N=64, K=4, L=9)",
        pass,
        gating: false,
        detail: format!("max detector SINR {first:.2} dB -> {last:.2} dB, N_r 40 -> {nr}, status {:?}", run.status),
    })
}

fn criterion10() -> Verdict {
    let mut cfg = ScenarioConfig::desk();
    cfg.seed = 7;
    let settings = AlgorithmSettings::default();
    let once = || {
        let sc = build_scenario(&cfg).unwrap();
        run_mode(&sc, &cfg, &settings, Mode::ProposedAdaptive).unwrap().trace.to_csv()
    };
    let (a, b) = (once(), once());
    Verdict {
        id: 10,
        name: "determinism of trace.csv",
        pass: a == b,
        gating: true,
        detail: format!("{} bytes, identical = {}", a.len(), a == b),
    }
}

fn main() -> ExitCode {
    let mut failed = false;
    let mut emit = |v: Verdict, t: Instant| {
        report(&v, t.elapsed().as_secs_f64());
        failed |= v.gating && !v.pass;
    };
    let t = Instant::now();
    emit(criterion1(), t);
    let t = Instant::now();
    emit(criterion2(), t);
    let t = Instant::now();
    emit(criterion3(), t);

    let t = Instant::now();
    let runs = desk_runs(1..=50);
    emit(criterion4(&runs), t);
    let t = Instant::now();
    emit(criterion5(&runs), t);
    let t = Instant::now();
    emit(criterion6(&runs), t);

    let t = Instant::now();
    let adaptive = campaign(Mode::ProposedAdaptive);
    let baseline = campaign(Mode::BaselineSenseMax(10));
    emit(criterion7(&adaptive, &baseline), t);
    let t = Instant::now();
    let fixed = campaign(Mode::ProposedFixed(10));
    emit(criterion8(&adaptive, &fixed), t);

    let t = Instant::now();
    match criterion9() {
        Some(v) => emit(v, t),
        None => println!("criterion  9 [SKIP] full-scale trajectory: long-running, set RISGUARD_FULL_SCALE=1"),
    }
    let t = Instant::now();
    emit(criterion10(), t);

    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
