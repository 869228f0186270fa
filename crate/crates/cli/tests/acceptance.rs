//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p tensorsar-cli --test acceptance`. Set `ACCEPTANCE_STRICT=1` to turn any FAIL into a test
//! failure; by default only the deterministic kernel criteria are enforced,
//! the statistical oracle criteria are reported.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tensorsar_cli::stages;
use tensorsar_core::artifact::pearson;
use tensorsar_core::bsscca::{band_powers, cca_bss, is_muscle, mark_muscle_components, CcaSources};
use tensorsar_core::eval::{
    channel_mean, evaluate, grand_average, windowed_corr, ChannelCollapse, ClusterKind, EvaluationReport, Method,
    TimeGrid,
};
use tensorsar_core::model_selection::{diffit_select, fit_curve_models, FitCurve};
use tensorsar_core::pipeline::{run_subject, subject_result, synth_epochs, truth_averages, PipelineConfig};
use tensorsar_core::synth::{generate_session, SynthConfig};
use tensorsar_core::tensor::{cp_als, CpOptions, DenseTensor3, KruskalModel};

struct Outcome {
    name: &'static str,
    pass: bool,
    enforced: bool,
    detail: String,
}

fn gaussian_factors(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), rank: usize) -> [DMatrix<f64>; 3] {
    let mut m = |n: usize| DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    [m(dims.0), m(dims.1), m(dims.2)]
}

fn tensor_of(f: &[DMatrix<f64>; 3]) -> DenseTensor3 {
    let r = f[0].ncols();
    DenseTensor3::from_fn((f[0].nrows(), f[1].nrows(), f[2].nrows()), |i, j, k| {
        (0..r).map(|c| f[0][(i, c)] * f[1][(j, c)] * f[2][(k, c)]).sum()
    })
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).abs()
}

/// Worst per-column |cosine| under the best column permutation.
fn factor_match(truth: &[DMatrix<f64>; 3], m: &KruskalModel) -> f64 {
    let r = truth[0].ncols();
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best = 0.0f64;
    permutations(&mut perm, 0, &mut |p| {
        let mut worst = f64::INFINITY;
        for (c, &q) in p.iter().enumerate() {
            for (mode, f) in truth.iter().enumerate() {
                let t: Vec<f64> = f.column(c).iter().copied().collect();
                worst = worst.min(abs_cos(&t, &m.column(mode, q)));
            }
        }
        best = best.max(worst);
    });
    best
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

/// Rank-3 recovery plus the monotonicity of every sweep seen.
fn cp_recovery(traces: &mut Vec<Vec<f64>>) -> Outcome {
    let t0 = Instant::now();
    let mut ok = 0;
    let mut worst_fit = 1.0f64;
    let mut worst_cos = 1.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let f = gaussian_factors(&mut rng, (64, 26, 30), 3);
        let x = tensor_of(&f);
        let (m, rep) = cp_als(&x, 3, &CpOptions { seed, ..CpOptions::default() }).unwrap();
        traces.push(rep.trace.clone());
        let cos = factor_match(&f, &m);
        worst_fit = worst_fit.min(rep.fit);
        worst_cos = worst_cos.min(cos);
        if rep.fit >= 0.999 && cos >= 0.99 {
            ok += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        name: "CP-ALS exact recovery",
        pass: ok == 20 && secs < 10.0,
        enforced: true,
        detail: format!("{ok}/20 seeds (min fit {worst_fit:.6}, min |cos| {worst_cos:.6}), {secs:.2} s"),
    }
}

fn diffit_recovery(traces: &mut Vec<Vec<f64>>) -> Outcome {
    let mut within = 0;
    let mut inside = true;
    let mut picks = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let rank = 8 + (seed as usize * 7) % 17;
        let f = gaussian_factors(&mut rng, (64, 26, 30), rank);
        let x = tensor_of(&f);
        let noise = DenseTensor3::from_fn(x.dims(), |_, _, _| rng.sample::<f64, _>(StandardNormal));
        let x = x.add(&noise.scaled(0.1 * x.frobenius_norm() / noise.frobenius_norm())).unwrap();
        let models = fit_curve_models(&x, 5, 26, &CpOptions { seed, ..CpOptions::default() }).unwrap();
        traces.extend(models.iter().map(|(_, r)| r.trace.clone()));
        let curve = FitCurve::new(models.iter().enumerate().map(|(i, (_, r))| (5 + i, r.fit)).collect()).unwrap();
        let sel = diffit_select(&curve).unwrap();
        inside &= sel > 5 && sel < 26;
        if sel.abs_diff(rank) <= 1 {
            within += 1;
        }
        picks.push(format!("{rank}->{sel}"));
    }
    Outcome {
        name: "DIFFIT rank recovery",
        pass: within >= 16 && inside,
        enforced: true,
        detail: format!("{within}/20 within ±1, all strictly inside (5, 26): {inside} [{}]", picks.join(" ")),
    }
}

/// Per-subject results of one synthetic study.
struct Study {
    report: EvaluationReport,
    ga_truth_r: f64,
    additivity: Vec<f64>,
    traces: Vec<Vec<f64>>,
    seconds: f64,
}

fn run_study(synth: &SynthConfig, cfg: &PipelineConfig) -> Study {
    let t0 = Instant::now();
    let mut results = Vec::new();
    let mut c2 = Vec::new();
    let mut truth = Vec::new();
    let mut additivity = Vec::new();
    let mut traces = Vec::new();
    for s in 0..synth.n_subjects {
        let session = generate_session(synth, s).unwrap();
        let raw = synth_epochs(&session, cfg).unwrap();
        let t = truth_averages(&session, cfg).unwrap();
        let run = run_subject(&raw, cfg).unwrap();
        additivity.push(run.clusters.clusters.additivity_error());
        traces.push(run.decomposition.fit.trace.clone());
        c2.push(run.clusters.clusters.cluster2.clone());
        truth.push(t.artifact);
        results.push(subject_result(&run.clusters, Some(&run.baseline)));
    }
    let report = evaluate(&results, &cfg.eval).unwrap();
    let grid = TimeGrid {
        sample_rate: results[0].cpd.sample_rate,
        pre_stimulus_s: results[0].cpd.pre_stimulus_s,
    };
    let ga_truth = channel_mean(&grand_average(&truth).unwrap());
    let ga_truth_r = windowed_corr(&grand_average(&c2).unwrap(), &ga_truth, grid, (0.0, 1350.0), ChannelCollapse::Mean)
        .map_or(f64::NAN, |(r, _)| r);
    Study {
        report,
        ga_truth_r,
        additivity,
        traces,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn entry_r(rep: &EvaluationReport, method: Method, cluster: ClusterKind, window: (f64, f64)) -> Option<f64> {
    rep.entries
        .iter()
        .find(|e| e.method == method && e.cluster == cluster && e.window_ms == window)
        .and_then(|e| e.r)
}

fn fmt_r(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), |r| format!("{r:.3}"))
}

fn oracle_detection(study: &Study) -> Outcome {
    let cleaned = entry_r(&study.report, Method::Cpd, ClusterKind::Cleaned, (0.0, 1350.0));
    let pass = study.ga_truth_r >= 0.95 && cleaned.is_some_and(|r| r.abs() <= 0.2) && study.seconds < 120.0;
    Outcome {
        name: "Oracle artifact detection",
        pass,
        enforced: false,
        detail: format!(
            "GA r(cluster2, truth artifact) = {:.4} (≥ 0.95), r(cluster3, lip EMG) = {} (|r| ≤ 0.2), {:.1} s for {} subjects (< 120 s)",
            study.ga_truth_r,
            fmt_r(cleaned),
            study.seconds,
            study.report.subject_count
        ),
    }
}

fn pre_onset(study: &Study) -> Outcome {
    let a = entry_r(&study.report, Method::Cpd, ClusterKind::RawNoEog, (0.0, 700.0));
    let b = entry_r(&study.report, Method::Cpd, ClusterKind::RawNoEog, (0.0, 900.0));
    Outcome {
        name: "Pre-onset preservation",
        pass: a.is_some_and(|r| r >= 0.95) && b.is_some_and(|r| r >= 0.95),
        enforced: false,
        detail: format!("r(cluster1, cluster3) = {} over 0–700 ms, {} over 0–900 ms (≥ 0.95)", fmt_r(a), fmt_r(b)),
    }
}

fn additivity(errors: &[f64]) -> Outcome {
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Outcome {
        name: "Cluster additivity",
        pass: errors.iter().all(|&e| e <= 1e-6),
        enforced: true,
        detail: format!("max relative error {worst:.2e} over {} runs (≤ 1e-6)", errors.len()),
    }
}

fn sinusoid_source(freq: f64, fs: f64, n: usize) -> CcaSources {
    let s: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()).collect();
    CcaSources {
        sources: DMatrix::from_row_slice(1, n, &s),
        autocorrs: vec![1.0],
        mixing: DMatrix::identity(1, 1),
        unmixing: DMatrix::identity(1, 1),
    }
}

fn bsscca_suite() -> Outcome {
    let fs = 512.0;
    let marked_20 = mark_muscle_components(&sinusoid_source(20.0, fs, 4096), fs, 7.0).unwrap() == vec![0];
    let unmarked_5 = mark_muscle_components(&sinusoid_source(5.0, fs, 4096), fs, 7.0).unwrap().is_empty();
    // boundary: EMG-band power exactly a seventh of EEG-band power
    let slow: Vec<f64> = (0..4096).map(|i| (2.0 * std::f64::consts::PI * 6.0 * i as f64 / fs).sin()).collect();
    let (_, p_eeg) = band_powers(&slow, fs);
    let boundary = is_muscle(p_eeg / 7.0, p_eeg, 7.0) && !is_muscle(p_eeg / 7.0 * (1.0 - 1e-9), p_eeg, 7.0);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = 6000;
    let base = DMatrix::from_fn(8, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mix = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(8, 8) * 2.0;
    let x = mix * base;
    let s = cca_bss(&x).unwrap();
    let err = (&s.mixing * &s.sources - &x).norm() / x.norm();
    Outcome {
        name: "BSS-CCA criterion unit suite",
        pass: marked_20 && unmarked_5 && boundary && err <= 1e-6,
        enforced: true,
        detail: format!(
            "20 Hz marked: {marked_20}, 5 Hz unmarked: {unmarked_5}, boundary P_emg = P_eeg/7 marked: {boundary}, reconstruction error {err:.2e} (≤ 1e-6)"
        ),
    }
}

fn comparative(cfg: &PipelineConfig, additivity: &mut Vec<f64>, traces: &mut Vec<Vec<f64>>) -> Outcome {
    let mut wins = 0;
    let mut signed_wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=20u64 {
        let synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let study = run_study(&synth, cfg);
        additivity.extend(&study.additivity);
        traces.extend(study.traces.iter().cloned());
        let cpd = entry_r(&study.report, Method::Cpd, ClusterKind::Cleaned, (0.0, 1350.0));
        let bss = entry_r(&study.report, Method::BssCca, ClusterKind::Cleaned, (0.0, 1350.0));
        // An undefined r (nothing left to correlate) counts as zero.
        let (cs, bs) = (cpd.unwrap_or(0.0), bss.unwrap_or(0.0));
        let (c, b) = (cs.abs(), bs.abs());
        if c <= b {
            wins += 1;
        }
        if cs <= bs {
            signed_wins += 1;
        }
        rows.push(format!("{c:.2}/{b:.2}"));
    }
    Outcome {
        name: "Comparative direction",
        pass: wins >= 15,
        enforced: false,
        detail: format!(
            "|r(CPD cleaned, EMG)| ≤ |r(BSS-CCA cleaned, EMG)| in {wins}/20 seeds (≥ 15; signed r: {signed_wins}/20), {} subjects per seed, |r| cpd/bss: {}",
            SynthConfig::default().n_subjects,
            rows.join(" ")
        ),
    }
}

fn pearson_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..400);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let offset = rng.random_range(-1e3..1e3);
        let x: Vec<f64> = (0..n).map(|_| offset + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 * v + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (mx, my) = (x.iter().sum::<f64>() / n as f64, y.iter().sum::<f64>() / n as f64);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        let naive = sxy / (sxx.sqrt() * syy.sqrt());
        worst = worst.max((pearson(&x, &y).unwrap() - naive).abs());
    }
    Outcome {
        name: "Pearson kernel",
        pass: worst <= 1e-12,
        enforced: true,
        detail: format!("max |r − two-pass r| = {worst:.2e} over 1000 pairs (≤ 1e-12)"),
    }
}

fn reproducibility(cfg: &PipelineConfig) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let synth = SynthConfig {
        n_subjects: 2,
        seed: 42,
        ..SynthConfig::default()
    };
    stages::synth(&synth, &ds, cfg).unwrap();
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        stages::run(&ds, &out, cfg).unwrap();
        csv.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    Outcome {
        name: "Reproducibility",
        pass: csv[0] == csv[1],
        enforced: true,
        detail: format!("two `run`s on the same dataset: report.csv byte-identical = {}", csv[0] == csv[1]),
    }
}

fn main() {
    let cfg = PipelineConfig::default();
    let mut traces = Vec::new();
    let mut outcomes = Vec::new();

    outcomes.push(cp_recovery(&mut traces));
    outcomes.push(diffit_recovery(&mut traces));

    let oracle = run_study(&SynthConfig::default(), &cfg);
    traces.extend(oracle.traces.iter().cloned());
    let mut additivity_errors = oracle.additivity.clone();
    outcomes.push(oracle_detection(&oracle));
    outcomes.push(pre_onset(&oracle));
    outcomes.push(bsscca_suite());
    let comp = comparative(&cfg, &mut additivity_errors, &mut traces);
    outcomes.push(comp);
    outcomes.push(pearson_kernel());
    outcomes.push(reproducibility(&cfg));
    outcomes.push(additivity(&additivity_errors));
    let bad = traces.iter().filter(|t| !monotone(t)).count();
    outcomes.push(Outcome {
        name: "ALS monotonicity",
        pass: bad == 0,
        enforced: true,
        detail: format!("{} of {} decompositions non-monotone (slack 1e-12)", bad, traces.len()),
    });

    println!();
    for o in &outcomes {
        println!("[{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!();
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass && (strict || o.enforced))
        .map(|o| o.name)
        .collect();
    if !failed.is_empty() {
        eprintln!("acceptance failed: {failed:?}");
        std::process::exit(1);
    }
}
