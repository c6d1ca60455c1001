//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Runs the full benchmark (about a quarter of an hour on one core).
//!
//! Failing criteria are reported truthfully; the process exits nonzero on a
//! failure only when `DIRESA_ACCEPTANCE_STRICT=1` is set.

use std::path::{Path, PathBuf};
use std::time::Instant;

use diresa::checkpoint::Checkpoint;
use diresa::config::{self, RunConfig};
use diresa::pipeline::{self, BenchOutput, MethodEvaluation};
use diresa_core::lorenz::{integrate, LorenzParams};
use diresa_core::loss::LossWeights;
use diresa_core::matrix::Matrix;
use diresa_core::metrics::{self, kpi_values, Kpi, KpiConfig};
use diresa_core::model::{build_model, DistanceLoss, ModelSpec, Variant};
use diresa_core::pca::fit_pca;
use diresa_core::reducer::{Identity, Reducer};
use diresa_core::seed;
use diresa_core::stats::welch_ttest;
use diresa_core::train::batch_loss_and_grad;

/// Benchmark reconstruction error and correlation of PCA with two latent
/// components, as published.
const PCA_MSE: f64 = 0.00191;
const PCA_CORR: f64 = 0.997;
const VAE_KL: f64 = 5.2e-6;
const CANBERRA_PUBLISHED: f64 = 1.42;

struct Outcome {
    lines: Vec<(usize, bool, String)>,
}

impl Outcome {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n:>2} {}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((n, pass, detail));
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn config_at(dir: &Path, body: &str) -> RunConfig {
    let mut c = config::parse(body).expect("acceptance config parses");
    c.output_dir = dir.to_path_buf();
    c.validate().expect("acceptance config is valid");
    c
}

// ---------------------------------------------------------------- 1

fn lorenz_oracle(p: &LorenzParams, rows: usize) -> Vec<[f64; 3]> {
    let f = |s: [f64; 3]| [p.sigma * (s[1] - s[0]), s[0] * (p.r - s[2]) - s[1], s[0] * s[1] - p.b * s[2]];
    let add = |s: [f64; 3], k: [f64; 3], h: f64| [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]];
    let mut s = p.initial;
    let mut out = Vec::with_capacity(rows);
    for step in 0..p.transient_steps + rows {
        let k1 = f(s);
        let k2 = f(add(s, k1, p.dt / 2.0));
        let k3 = f(add(s, k2, p.dt / 2.0));
        let k4 = f(add(s, k3, p.dt));
        for i in 0..3 {
            s[i] += p.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if step >= p.transient_steps {
            out.push(s);
        }
    }
    out
}

fn criterion_1(o: &mut Outcome) {
    let mut times = Vec::new();
    let mut files = Vec::new();
    for name in ["gen-a", "gen-b"] {
        let dir = fresh_dir(name);
        let t = Instant::now();
        let g = pipeline::cmd_generate(&config_at(&dir, "")).expect("generate");
        times.push(secs(t));
        files.push(std::fs::read(&g.path).expect("dataset readable"));
    }
    let identical = files[0] == files[1];
    let p = LorenzParams::benchmark();
    let raw = integrate(&p).expect("integrate");
    let oracle = lorenz_oracle(&p, 1000);
    let err = oracle
        .iter()
        .enumerate()
        .flat_map(|(r, s)| (0..3).map(move |c| (r, c, s[c])))
        .map(|(r, c, v)| (raw[(r, c)] - v).abs())
        .fold(0.0, f64::max);
    let slowest = times.iter().cloned().fold(0.0, f64::max);
    o.record(
        1,
        identical && err <= 1e-12 && slowest < 10.0,
        format!("files identical: {identical}, max |raw - RK4 oracle| over 1000 steps {err:.2e} (tol 1e-12), slowest generation {slowest:.2} s (< 10 s)"),
    );
}

// ---------------------------------------------------------------- 2

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = probe[i];
            probe[i] = v + h;
            let up = f(&probe);
            probe[i] = v - h;
            let down = f(&probe);
            probe[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let floor = 1e-6 * numeric.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn criterion_2(o: &mut Outcome) {
    const DRAWS: usize = 50;
    let t = Instant::now();
    let rows = {
        let p = LorenzParams { transient_steps: 100, total_steps: 4000, ..LorenzParams::benchmark() };
        diresa_core::lorenz::generate_dataset(&p).expect("dataset").data
    };
    let window = |start: usize| rows.slice_rows(start % (rows.rows() - 16), start % (rows.rows() - 16) + 16);
    let cases = [
        ("AE", Variant::Ae, None),
        ("BNAE", Variant::Bnae, None),
        ("CRAE", Variant::Crae, None),
        ("VAE", Variant::Vae, None),
        ("DIRESA_MSE", Variant::Diresa, Some(DistanceLoss::Mse)),
        ("DIRESA_Corr", Variant::Diresa, Some(DistanceLoss::Corr)),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, variant, distance_loss) in cases {
        let spec = ModelSpec { variant, input_dim: 3, hidden_widths: vec![8, 4], latent_dim: 2, distance_loss };
        let (mut accepted, mut draw, mut worst) = (0, 0u64, 0.0f64);
        while accepted < DRAWS && draw < 5000 {
            draw += 1;
            let params = build_model(&spec, seed::derive_indexed(2, name, draw)).expect("model");
            let batch = window(draw as usize * 61);
            let twin = (variant == Variant::Diresa).then(|| window(draw as usize * 61 + 1777));
            let weights = LossWeights::for_variant(variant, 0.6);
            let noise = seed::derive_indexed(3, name, draw);
            let loss = |p: &diresa_core::model::ModelParams| {
                batch_loss_and_grad(p, &batch, twin.as_ref(), &weights, &mut seed::rng(noise)).expect("loss")
            };
            let (_, _, analytic, tape) = loss(&params);
            // a finite-difference step must not cross a relu kink
            if params.relu_margin(&tape) < 1e-4 {
                continue;
            }
            accepted += 1;
            let numeric = central_difference(
                |x| {
                    let mut q = params.clone();
                    q.read_params(x).expect("params");
                    loss(&q).0
                },
                &params.params_flat(),
                1e-5,
            );
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        ok &= accepted == DRAWS && worst < 1e-4;
        details.push(format!("{name} {worst:.1e}"));
    }
    let elapsed = secs(t);
    o.record(
        2,
        ok && elapsed < 120.0,
        format!("max relative error over {DRAWS} draws per variant (tol 1e-4): {}; {elapsed:.1} s (< 120 s)", details.join(", ")),
    );
}

// ---------------------------------------------------------------- 3, 4, 5, 8, 9

const BENCH: &str = "
seed = 1
[model]
methods = [\"PCA\", \"DIRESA_MSE\", \"AE\", \"VAE\"]
[training_overrides.AE]
restarts = 3
[training_overrides.VAE]
restarts = 3
[evaluation]
anchors = 2000
";

fn evaluation<'a>(bench: &'a BenchOutput, label: &str) -> Option<&'a MethodEvaluation> {
    bench.rows.iter().find(|r| r.label == label).and_then(|r| r.evaluation.as_ref())
}

fn criterion_3(o: &mut Outcome, cfg: &RunConfig, bench: &BenchOutput) {
    // time the PCA fit and its KPI pass on their own
    let t = Instant::now();
    let ds = pipeline::resolve_dataset(cfg).expect("dataset");
    let test = ds.split("test").expect("test split");
    let pca = fit_pca(&ds.split("train").expect("train split"), 2).expect("pca");
    let latent = pca.encode(&test).expect("encode");
    let samples = pipeline::evaluate_parallel(&test, &latent, &cfg.kpi_config()).expect("kpis");
    let report = metrics::aggregate(&samples, cfg.evaluation.location_param).expect("report");
    let elapsed = secs(t);
    let Some(e) = evaluation(bench, "PCA") else {
        return o.record(3, false, "PCA missing from the benchmark".into());
    };
    let mse_ok = (e.mse - PCA_MSE).abs() <= 0.1 * PCA_MSE;
    let corr = e.report.get(Kpi::Corr).mean;
    let corr_ok = (corr - PCA_CORR).abs() <= 0.005;
    let same = report == e.report;
    o.record(
        3,
        mse_ok && corr_ok && same && elapsed < 60.0,
        format!(
            "PCA test MSE {:.4e} vs {PCA_MSE} ±10% ({}), mean Corr {corr:.5} vs {PCA_CORR} ±0.005 ({}), {} anchors in {elapsed:.1} s (< 60 s)",
            e.mse,
            if mse_ok { "ok" } else { "outside" },
            if corr_ok { "ok" } else { "outside" },
            report.anchors,
        ),
    );
}

fn criterion_4(o: &mut Outcome, cfg: &RunConfig, bench: &BenchOutput) {
    let Some(e) = evaluation(bench, "DIRESA_MSE") else {
        return o.record(4, false, "DIRESA_MSE failed to train".into());
    };
    let ckpt = Checkpoint::load(&cfg.output_dir.join(pipeline::checkpoint_rel("DIRESA_MSE"))).expect("checkpoint");
    let training = ckpt.header.training.as_ref().expect("training record");
    let validation = pipeline::resolve_dataset(cfg).expect("dataset").split("validation").expect("validation split");
    let val_cov = pipeline::max_abs_latent_cov(&ckpt.model.encode(&validation).expect("encode"));
    let corr = e.report.get(Kpi::Corr).mean;
    let final_cov = e.final_val_cov.unwrap_or(f64::NAN);
    let seconds = bench.manifest.timings_s.get("train/DIRESA_MSE").copied().unwrap_or(f64::NAN);
    let restarts = training.restarts.len();
    let pass = e.mse < PCA_MSE
        && corr >= 0.99
        && final_cov <= 2e-5
        && val_cov < 0.005
        && restarts == 10
        && training.config.epochs == 200
        && seconds <= 7200.0;
    o.record(
        4,
        pass,
        format!(
            "DIRESA_MSE best of {restarts} restarts (seed {}): test MSE {:.3e} (< {PCA_MSE}), mean Corr {corr:.5} (>= 0.99), final validation cov loss {final_cov:.2e} (<= 2e-5), max |latent cov| validation {val_cov:.2e} / test {:.2e} (< 0.005), trained in {:.0} s (<= 7200 s)",
            ckpt.header.seeds["run"],
            e.mse,
            e.latent_cov_max_abs,
            seconds,
        ),
    );
}

fn criterion_5(o: &mut Outcome, bench: &BenchOutput) {
    let (Some(d), Some(p)) = (evaluation(bench, "DIRESA_MSE"), evaluation(bench, "PCA")) else {
        return o.record(5, false, "DIRESA_MSE or PCA missing".into());
    };
    let l = d.report.location_param;
    let mut wins = 0;
    let mut parts = Vec::new();
    for k in Kpi::ALL {
        let (a, b) = (d.report.get(k).median, p.report.get(k).median);
        let win = if k.lower_is_better() { a < b } else { a > b };
        wins += win as usize;
        parts.push(format!("{} {a:.4}/{b:.4}{}", k.label(l), if win { "+" } else { "" }));
    }
    o.record(5, wins >= 4, format!("DIRESA_MSE beats PCA on {wins}/6 medians (>= 4): {}", parts.join(", ")));
}

fn criterion_8(o: &mut Outcome, cfg: &RunConfig) {
    let ckpt = Checkpoint::load(&cfg.output_dir.join(pipeline::checkpoint_rel("DIRESA_MSE"))).expect("checkpoint");
    let t = ckpt.header.training.expect("training record");
    let rec = &t.history.records;
    let target = t.config.anneal_target;
    let step = t.config.anneal_step;
    let first_hit = rec.iter().position(|r| r.anneal_observed.is_some_and(|v| v <= target));
    let stop = t.history.anneal_stopped_epoch;
    let mut ok = !rec.is_empty() && rec[0].anneal_weight == 0.0 && stop == first_hit;
    for (e, r) in rec.iter().enumerate() {
        // k exact steps of 0.2 by epoch k, frozen from the stop epoch on
        let k = stop.map_or(e, |s| e.min(s));
        ok &= r.anneal_weight == k as f64 * step;
        let lr = match stop {
            Some(s) if e >= s => t.config.base_lr / 2f64.powi(((e - s) / t.config.lr_halving_period) as i32),
            _ => t.config.base_lr,
        };
        ok &= r.lr == lr;
    }
    let halvings: Vec<usize> = rec.windows(2).filter(|w| w[1].lr == w[0].lr / 2.0).map(|w| w[1].epoch).collect();
    let shown: Vec<String> = halvings.iter().take(4).map(|e| e.to_string()).collect();
    o.record(
        8,
        ok && (step - 0.2).abs() == 0.0 && target == 2e-5,
        format!(
            "weight starts at 0, steps of {step}, frozen at epoch {} at weight {} (first epoch with observed <= {target:e}: {}), lr halves at epochs {}...",
            stop.map_or("never".into(), |s| s.to_string()),
            rec.last().map_or(f64::NAN, |r| r.anneal_weight),
            first_hit.map_or("none".into(), |s| s.to_string()),
            shown.join(", "),
        ),
    );
}

fn criterion_9(o: &mut Outcome, bench: &BenchOutput) {
    let (Some(ae), Some(vae)) = (evaluation(bench, "AE"), evaluation(bench, "VAE")) else {
        let status: Vec<String> = bench.rows.iter().map(|r| format!("{}: {}", r.label, r.status)).collect();
        return o.record(9, false, format!("AE or VAE missing ({})", status.join("; ")));
    };
    let kl = vae.final_val_kl.unwrap_or(f64::NAN);
    let kl_ok = (VAE_KL / 10.0..=VAE_KL * 10.0).contains(&kl);
    o.record(
        9,
        ae.mse < 2e-4 && vae.mse < 5e-4 && kl_ok,
        format!(
            "3 restarts each: AE test MSE {:.3e} (< 2e-4), VAE test MSE {:.3e} (< 5e-4), VAE final validation KL {kl:.2e} (within 10x of {VAE_KL:e})",
            ae.mse, vae.mse
        ),
    );
}

// ---------------------------------------------------------------- 6

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let (mut c, mut d, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    let n = a.len();
    for i in 0..n {
        for j in i + 1..n {
            let (sa, sb) = ((a[i] - a[j]).signum(), (b[i] - b[j]).signum());
            let (za, zb) = (a[i] == a[j], b[i] == b[j]);
            ta += za as i64;
            tb += zb as i64;
            if !za && !zb {
                if sa == sb {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / (((n0 - ta) as f64) * ((n0 - tb) as f64)).sqrt()
}

/// Brute-force KPIs of one anchor: (Corr, LogCorr, Can, Pear, Spear, Ken).
fn brute_kpis(x: &Matrix, z: &Matrix, anchor: usize, l: usize) -> [f64; 6] {
    let dist = |m: &Matrix, i: usize| -> f64 {
        m.row(anchor).iter().zip(m.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let others: Vec<usize> = (0..x.rows()).filter(|&i| i != anchor).collect();
    let d_o: Vec<f64> = others.iter().map(|&i| dist(x, i)).collect();
    let d_l: Vec<f64> = others.iter().map(|&i| dist(z, i)).collect();
    let log = |v: &[f64]| v.iter().map(|d| (d + 1.0).ln()).collect::<Vec<f64>>();
    // strict order by (distance, position)
    let before = |v: &[f64], i: usize, j: usize| v[j] < v[i] || (v[j] == v[i] && j < i);
    let rank = |v: &[f64], i: usize| 1 + (0..v.len()).filter(|&j| before(v, i, j)).count();
    let mut near: Vec<usize> = (0..d_l.len()).filter(|&i| rank(&d_l, i) <= l).collect();
    near.sort_by_key(|&i| rank(&d_l, i));
    let can: f64 = near
        .iter()
        .enumerate()
        .map(|(p, &i)| {
            let (a, b) = ((p + 1) as f64, rank(&d_o, i).min(l + 1) as f64);
            (a - b).abs() / (a + b)
        })
        .sum::<f64>()
        / l as f64;
    let nl: Vec<f64> = near.iter().map(|&i| d_l[i]).collect();
    let no: Vec<f64> = near.iter().map(|&i| d_o[i]).collect();
    [
        pearson(&d_o, &d_l),
        pearson(&log(&d_o), &log(&d_l)),
        can,
        pearson(&nl, &no),
        pearson(&average_ranks(&nl), &average_ranks(&no)),
        kendall_tau_b(&nl, &no),
    ]
}

fn criterion_6(o: &mut Outcome) {
    const L: usize = 5;
    let lorenz = {
        let p = LorenzParams { transient_steps: 100, total_steps: 3000, ..LorenzParams::benchmark() };
        diresa_core::lorenz::generate_dataset(&p).expect("dataset").data
    };
    let quantize = |m: &Matrix, q: f64| {
        Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|v| (v * q).round() / q).collect()).unwrap()
    };
    let config = KpiConfig { location_param: L, ..KpiConfig::default() };
    let (mut corr_err, mut rank_exact, mut sets) = (0.0f64, true, 0);
    for trial in 0..12usize {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| lorenz.row((trial * 211 + i * 137) % lorenz.rows()).to_vec()).collect();
        let mut x = Matrix::from_rows(&rows).unwrap();
        let encoder = build_model(&ModelSpec::lorenz(Variant::Ae), trial as u64).expect("model");
        let mut z = encoder.encode(&x).expect("encode");
        if trial % 3 == 2 {
            // coarse grids force tied distances in both spaces
            x = quantize(&x, 4.0);
            z = quantize(&z, 8.0);
        }
        let samples = metrics::evaluate(&x, &z, &config).expect("kpis");
        for s in &samples {
            let want = brute_kpis(&x, &z, s.anchor, L);
            let got = Kpi::ALL.map(|k| s.get(k).unwrap_or(f64::NAN));
            for (i, k) in Kpi::ALL.iter().enumerate() {
                let both_nan = want[i].is_nan() && got[i].is_nan();
                if both_nan {
                    continue;
                }
                match k {
                    Kpi::Can | Kpi::Ken => rank_exact &= got[i] == want[i],
                    _ => corr_err = corr_err.max((got[i] - want[i]).abs()),
                }
            }
        }
        sets += 1;
    }
    let x = Matrix::from_rows(&(0..20).map(|i| lorenz.row(i * 149).to_vec()).collect::<Vec<_>>()).unwrap();
    let id = metrics::evaluate(&x, &Identity { dim: 3 }.encode(&x).unwrap(), &config).expect("identity kpis");
    let perfect = id.iter().all(|s| {
        [s.corr, s.logcorr, s.pear, s.spear, s.ken].iter().all(|v| v.is_some_and(|v| (v - 1.0).abs() < 1e-12))
            && s.can == Some(0.0)
    });
    o.record(
        6,
        rank_exact && corr_err <= 1e-12 && perfect,
        format!(
            "{sets} twenty-point sets, all anchors, l={L}: Can/Ken exact: {rank_exact}, max correlation deviation {corr_err:.1e} (tol 1e-12); identity perfect: {perfect}"
        ),
    );
}

// ---------------------------------------------------------------- 7

fn criterion_7(o: &mut Outcome) {
    let lists: Vec<f64> = (0..200).map(|i| ((i * 7919) % 997) as f64).collect();
    let identical = metrics::kpi_location(&lists, &lists, 50).expect("kpi").can;
    let a = metrics::random_canberra_baseline(50, 10_000, 20_000, 71).expect("baseline");
    let b = metrics::random_canberra_baseline(50, 10_000, 20_000, 72).expect("baseline");
    let gap = (a.mean - b.mean).abs();
    let tol = 2.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    o.record(
        7,
        identical == 0.0 && gap <= tol,
        format!(
            "identical lists {identical}; random top-50 of 1e4 baseline {:.5} ± {:.5} and {:.5} ± {:.5} (gap {gap:.1e} <= {tol:.1e}); published ~{CANBERRA_PUBLISHED} is {:.3}x ours (per-list normalization by l)",
            a.mean,
            a.stderr,
            b.mean,
            b.stderr,
            CANBERRA_PUBLISHED / a.mean
        ),
    );
}

// ---------------------------------------------------------------- 10

fn t_density(x: f64, df: f64) -> f64 {
    let ln_gamma = |v: f64| libm_lgamma(v);
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0)
}

/// Lanczos approximation of ln Γ(v) for v > 0.
fn libm_lgamma(v: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if v < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * v).sin()).ln() - libm_lgamma(1.0 - v);
    }
    let x = v - 1.0;
    let t = x + G + 0.5;
    let s = C[1..].iter().enumerate().fold(C[0], |s, (i, c)| s + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

/// Welch test from first principles; the two-sided tail integrates the t
/// density over [|t|, ∞) after substituting x = |t| / u.
fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (n, m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) / n)
    };
    let ((na, ma, sa), (nb, mb, sb)) = (stats(a), stats(b));
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let at = t.abs();
    let g = |u: f64| if u <= 0.0 { 0.0 } else { t_density(at / u, df) * at / (u * u) };
    let (fa, fm, fb) = (g(0.0), g(0.5), g(1.0));
    let tail = simpson(&g, 0.0, 1.0, fa, fm, fb, (fa + 4.0 * fm + fb) / 6.0, 1e-15, 60);
    (t, df, 2.0 * tail)
}

fn criterion_10(o: &mut Outcome, bench: &BenchOutput) {
    let small = "
seed = 5
[dataset.lorenz]
total_steps = 5000
[model]
methods = [\"PCA\", \"DIRESA_MSE\", \"VAE\"]
[training]
epochs = 4
restarts = 2
[evaluation]
anchors = 200
";
    let runs: Vec<BenchOutput> = ["bench-a", "bench-b"]
        .iter()
        .map(|n| pipeline::cmd_bench(&config_at(&fresh_dir(n), small)).expect("bench"))
        .collect();
    let same = runs[0].summary_sha256 == runs[1].summary_sha256 && runs[0].manifest.outputs == runs[1].manifest.outputs;
    let (Some(d), Some(p)) = (evaluation(bench, "DIRESA_MSE"), evaluation(bench, "PCA")) else {
        return o.record(10, false, format!("repeat bench identical: {same}; DIRESA_MSE or PCA missing"));
    };
    let (a, b) = (kpi_values(&d.samples, Kpi::Corr), kpi_values(&p.samples, Kpi::Corr));
    let w = welch_ttest(&a, &b).expect("welch");
    let (t, df, p_oracle) = welch_oracle(&a, &b);
    let gap = (w.p_value - p_oracle).abs();
    o.record(
        10,
        same && gap <= 1e-9 && (w.t - t).abs() <= 1e-9 * t.abs().max(1.0) && (w.df - df).abs() <= 1e-9 * df,
        format!(
            "repeat bench summary sha256 identical: {same} ({}); Welch DIRESA_MSE vs PCA Corr: t {:.4}, df {:.1}, p {:.6e}, oracle p {p_oracle:.6e} (|gap| {gap:.1e} <= 1e-9)",
            &runs[0].summary_sha256[..12],
            w.t,
            w.df,
            w.p_value
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut o = Outcome { lines: Vec::new() };
    criterion_1(&mut o);
    criterion_2(&mut o);
    criterion_6(&mut o);
    criterion_7(&mut o);

    let dir = fresh_dir("benchmark");
    let cfg = config_at(&dir, BENCH);
    println!("running the full benchmark in {} ...", dir.display());
    match pipeline::cmd_bench(&cfg) {
        Ok(bench) => {
            criterion_3(&mut o, &cfg, &bench);
            criterion_4(&mut o, &cfg, &bench);
            criterion_5(&mut o, &bench);
            criterion_8(&mut o, &cfg);
            criterion_9(&mut o, &bench);
            criterion_10(&mut o, &bench);
        }
        Err(e) => {
            for n in [3, 4, 5, 8, 9, 10] {
                o.record(n, false, format!("benchmark failed: {e}"));
            }
        }
    }

    o.lines.sort_by_key(|l| l.0);
    let passed = o.lines.iter().filter(|l| l.1).count();
    println!("\nacceptance summary ({:.0} s):", secs(start));
    for (n, pass, detail) in &o.lines {
        println!("  {n:>2} {} {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    println!("{passed}/{} criteria passed", o.lines.len());
    let strict = std::env::var("DIRESA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < o.lines.len() {
        std::process::exit(1);
    }
}
