//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.
//!
//! Pass criterion numbers (e.g. `5 8`) to run a subset.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use tickhawkes::formats::events::{read_events_from, write_events_to};
use tickhawkes::formats::quotes::{write_quotes_to, QuoteStream};
use tickhawkes::manifest::dataset_fingerprints;
use tickhawkes::parallel::Parallel;
use tickhawkes::stream::{run_stream, Estimator, StreamConfig, StreamRow};
use tickhawkes::study::{self, check_overlap, InitChoice, Method, StudyConfig};
use tickhawkes_core::ingest::{filter_events, synthesize_quotes, IngestConfig, TickSeries};
use tickhawkes_core::mle::{fit_mle, log_likelihood, log_likelihood_grad, Init};
use tickhawkes_core::nn::{self, Architecture, FeatureEncoding, FeatureView, LstmEstimator, TrainConfig};
use tickhawkes_core::simulate::{
    default_param_sampler, path_rng, simulate_with_rng, MarkDist, MarkLaw, StopRule,
};
use tickhawkes_core::volatility::{hawkes_volatility, variance_rate, VolConfig};
use tickhawkes_core::{validate, Direction, EventSequence, HawkesParams, MarkMoments, MarkedEvent};

const STUDY_POINT: HawkesParams = HawkesParams::new(0.3, 0.4, 0.7, 1.5);
/// Reference MLE sampling distribution at the study point, L = 2000.
const MLE_MEANS: [f64; 4] = [0.3036, 0.3988, 0.7024, 1.5078];
const MLE_SDS: [f64; 4] = [0.0314, 0.0500, 0.0608, 0.1145];

type Check = (bool, String);

// ---------------------------------------------------------------- oracles

fn random_params<R: Rng>(rng: &mut R) -> HawkesParams {
    let mu = rng.random_range(0.05..1.0);
    let beta = rng.random_range(0.3..4.0);
    let n = rng.random_range(0.0..0.95);
    let split = rng.random_range(0.0..1.0);
    HawkesParams::new(mu, n * split * beta, n * (1.0 - split) * beta, beta)
}

/// O(N²) log-likelihood: every intensity summed over all earlier events.
fn direct_log_likelihood(p: &HawkesParams, seq: &EventSequence) -> f64 {
    let ev = seq.events();
    let mut value = 0.0;
    for (i, e) in ev.iter().enumerate() {
        let mut lambda = p.mu;
        for f in &ev[..i] {
            let a = if f.direction == e.direction { p.alpha1 } else { p.alpha2 };
            lambda += a * (-p.beta * (e.time - f.time)).exp();
        }
        value += lambda.ln();
    }
    let t = seq.horizon();
    let mut compensator = 2.0 * p.mu * t;
    for e in ev {
        compensator += (p.alpha1 + p.alpha2) / p.beta * (1.0 - (-p.beta * (t - e.time)).exp());
    }
    value - compensator
}

fn net_moves(seq: &EventSequence, after: f64) -> f64 {
    seq.iter()
        .filter(|e| e.time > after)
        .map(|e| if e.direction == Direction::Up { e.mark as f64 } else { -(e.mark as f64) })
        .sum()
}

// ---------------------------------------------------------------- criteria

fn c1_likelihood_oracle() -> Check {
    let mut rng = path_rng(1001, 0);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let p = random_params(&mut rng);
        let n = rng.random_range(1..=1000);
        let seq = simulate_with_rng(&p, StopRule::EventCount(n), &MarkLaw::unit(), &mut path_rng(1002, i)).unwrap();
        let horizon = seq.horizon() + rng.random_range(0.0..2.0);
        let seq = EventSequence::new(seq.into_events(), horizon).unwrap();
        let fast = log_likelihood(&p, &seq).unwrap();
        let slow = direct_log_likelihood(&p, &seq);
        worst = worst.max((fast - slow).abs() / slow.abs());
    }
    (worst <= 1e-10, format!("200 instances, worst relative difference {worst:.2e} (bound 1e-10)"))
}

fn c2_gradients() -> Check {
    // Likelihood gradient against a five-point central difference.
    let mut rng = path_rng(2001, 0);
    let mut worst_mle = 0.0f64;
    let mut checked_mle = 0;
    for i in 0..40 {
        let truth = random_params(&mut rng);
        let seq =
            simulate_with_rng(&truth, StopRule::EventCount(300), &MarkLaw::unit(), &mut path_rng(2002, i)).unwrap();
        let p = HawkesParams::new(truth.mu * 1.2, truth.alpha1 * 0.8 + 0.01, truth.alpha2 * 0.9 + 0.02, truth.beta * 1.1);
        if !p.is_valid() {
            continue;
        }
        let g = log_likelihood_grad(&p, &seq).unwrap().gradient;
        let base = p.to_array();
        for k in 0..4 {
            let h = 1e-4 * base[k].abs().max(0.1);
            let at = |s: f64| {
                let mut a = base;
                a[k] += s * h;
                log_likelihood(&HawkesParams::from_array(a), &seq).unwrap()
            };
            let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
            worst_mle = worst_mle.max((g[k] - fd).abs() / g[k].abs().max(1.0));
            checked_mle += 1;
        }
    }

    // Network gradient against central differences, reduced and full width.
    let mut worst_nn = 0.0f64;
    let mut checked_nn = 0;
    for (arch, batch, seed) in [
        (Architecture { hidden1: 2, hidden2: 2 }, 3, 1),
        (Architecture { hidden1: 2, hidden2: 2 }, 9, 2),
        (Architecture::default(), 4, 3),
    ] {
        let mut rng = path_rng(2100 + seed, 0);
        let mut model = LstmEstimator::initialized(arch, &mut rng);
        for w in model.weights_mut() {
            *w += rng.random_range(-0.3..0.3);
        }
        let inputs: Vec<FeatureEncoding> = (0..batch)
            .map(|_| FeatureEncoding {
                gaps: (0..5).map(|_| -rng.random::<f64>().ln() * 2.0).collect(),
                directions: (0..5).map(|_| rng.random_range(1..=2)).collect(),
            })
            .collect();
        let views: Vec<FeatureView> = inputs.iter().map(FeatureEncoding::view).collect();
        let targets: Vec<[f64; 4]> = (0..batch).map(|_| [0.0; 4].map(|_: f64| rng.random_range(0.05..1.5))).collect();
        let (_, grad) = model.loss_and_gradient(&views, &targets);
        let n = model.weights().len();
        for _ in 0..20 {
            let k = rng.random_range(0..n);
            let w0 = model.weights()[k];
            let h = 1e-6 * w0.abs().max(1.0);
            model.weights_mut()[k] = w0 + h;
            let up = model.loss(&views, &targets);
            model.weights_mut()[k] = w0 - h;
            let down = model.loss(&views, &targets);
            model.weights_mut()[k] = w0;
            let fd = (up - down) / (2.0 * h);
            if grad[k].abs() < 1e-8 {
                continue;
            }
            worst_nn = worst_nn.max((grad[k] - fd).abs() / grad[k].abs().max(fd.abs()));
            checked_nn += 1;
        }
    }
    (
        worst_mle <= 1e-6 && worst_nn <= 1e-4 && checked_nn >= 30,
        format!(
            "likelihood: {checked_mle} components, worst {worst_mle:.2e} (bound 1e-6); \
             BPTT: {checked_nn} weights, worst {worst_nn:.2e} (bound 1e-4)"
        ),
    )
}

fn c3_volatility() -> Check {
    let (burn, t) = (50.0, 100.0);
    let paths = 20_000u64;
    let (mut s, mut s2) = (0.0, 0.0);
    for i in 0..paths {
        let seq =
            simulate_with_rng(&STUDY_POINT, StopRule::Horizon(burn + t), &MarkLaw::unit(), &mut path_rng(3001, i))
                .unwrap();
        let net = net_moves(&seq, burn);
        s += net;
        s2 += net * net;
    }
    let n = paths as f64;
    let empirical = (s2 / n - (s / n).powi(2)).sqrt();
    let cfg = VolConfig { horizon_t: t, ..Default::default() };
    let closed = hawkes_volatility(&STUDY_POINT, &MarkMoments::unit(), &cfg).unwrap().sd_ticks;
    let rel = (closed - empirical).abs() / empirical;

    // Poisson reduction with general marks.
    let mut worst_poisson = 0.0f64;
    for (mu, z) in [(0.3, [1.0, 1.0, 1.0, 1.0]), (1.7, [1.5, 2.0, 3.0, 5.0]), (0.05, [3.0, 1.0, 12.0, 1.0])] {
        let marks = MarkMoments::new(z[0], z[1], z[2], z[3]).unwrap();
        let p = HawkesParams::new(mu, 0.0, 0.0, 1.0);
        for horizon in [1.0, 100.0] {
            let v = hawkes_volatility(&p, &marks, &VolConfig { horizon_t: horizon, ..Default::default() }).unwrap();
            let exact = (z[2] + z[3]) * mu * horizon;
            worst_poisson = worst_poisson.max((v.sd_ticks.powi(2) - exact).abs() / exact);
        }
        let rate = variance_rate(&p, &marks).unwrap();
        worst_poisson = worst_poisson.max((rate - (z[2] + z[3]) * mu).abs() / ((z[2] + z[3]) * mu));
    }
    (
        rel <= 0.03 && worst_poisson <= 1e-12,
        format!(
            "closed-form SD {closed:.4} vs Monte Carlo {empirical:.4} over {paths} paths ({:.2}%, bound 3%); \
             Poisson reduction worst {worst_poisson:.1e} (bound 1e-12)",
            100.0 * rel
        ),
    )
}

fn c4_mle_sampling() -> Check {
    let cfg = StudyConfig {
        params: STUDY_POINT,
        n_paths: 500,
        length: 2000,
        methods: vec![Method::Mle],
        init: InitChoice::Truth,
        seed: 4001,
    };
    let (report, _) = study::run_study(&cfg, None).unwrap();
    let s = &report.methods[0];
    let (sd, se) = (s.sd.unwrap(), s.se.unwrap());
    let mut ok = s.n >= 2;
    let mut parts = Vec::new();
    for k in 0..4 {
        let z = (s.mean[k] - MLE_MEANS[k]) / se[k];
        let sd_dev = sd[k] / MLE_SDS[k] - 1.0;
        ok &= z.abs() <= 3.0 && sd_dev.abs() <= 0.30;
        parts.push(format!(
            "{} mean {:.4} ({z:+.2} SE) sd {:.4} ({:+.0}%)",
            study::PARAM_NAMES[k],
            s.mean[k],
            sd[k],
            100.0 * sd_dev
        ));
    }
    (ok, format!("{} fits, {} failed; {}", s.n, s.failed, parts.join("; ")))
}

fn c5_nn_vs_mle(model_out: &mut Option<LstmEstimator>) -> Check {
    let clock = Instant::now();
    let train_set = tickhawkes::parallel::make_dataset_parallel(8000, 500, &default_param_sampler(), 5001).unwrap();
    let test_set = tickhawkes::parallel::make_dataset_parallel(1500, 500, &default_param_sampler(), 5002).unwrap();
    check_overlap(&test_set, &dataset_fingerprints(&train_set, 0..train_set.n_paths())).unwrap();
    let cfg = TrainConfig { epochs: 100, seed: 5003, ..Default::default() };
    let (model, log) = nn::train_with(&train_set, &cfg, &Parallel, &mut |_| {}).unwrap();
    let report = study::compare(&test_set, &model, InitChoice::Auto).unwrap();
    let first = log.epochs.first().unwrap().validation_mse;
    let last = log.epochs.last().unwrap().validation_mse;
    *model_out = Some(model);
    let per_param = |m: &[f64; 4]| m.map(|x| format!("{x:.4}")).join("/");
    (
        report.mse_ratio <= 2.0,
        format!(
            "NN MSE {:.4} vs MLE MSE {:.4} on {} held-out paths ({} MLE failures excluded): ratio {:.3} (bound 2.0); \
             per parameter NN {} MLE {}; validation MSE {first:.4} -> {last:.4}; {:.0}s",
            report.nn.mse_aggregate,
            report.mle.mse_aggregate,
            report.n_paths,
            report.mle.failed,
            report.mse_ratio,
            per_param(&report.nn.mse),
            per_param(&report.mle.mse),
            clock.elapsed().as_secs_f64()
        ),
    )
}

fn c6_speed(trained: Option<&LstmEstimator>) -> Check {
    let paths: Vec<EventSequence> =
        (0..100).map(|i| study::study_path(&STUDY_POINT, 2000, 6001, i).unwrap()).collect();
    let fallback;
    let model = match trained {
        Some(m) => m,
        None => {
            fallback = LstmEstimator::initialized(Architecture::default(), &mut path_rng(6002, 0));
            &fallback
        }
    };
    let encoded: Vec<FeatureEncoding> = paths.iter().map(FeatureEncoding::from_sequence).collect();
    let views: Vec<FeatureView> = encoded.iter().map(FeatureEncoding::view).collect();
    // Warm both paths once, then time single-threaded.
    let _ = model.predict_batch(&views[..8]);
    let _ = fit_mle(&paths[0], Init::Auto);
    let nn = model.predict_batch(&views).per_path;
    let mle_times: Vec<f64> = paths.iter().map(|p| fit_mle(p, Init::Auto).unwrap().wall_time).collect();
    let mle = mle_times.iter().sum::<f64>() / mle_times.len() as f64;
    (
        nn <= mle / 10.0,
        format!(
            "NN {:.3} ms/path vs MLE {:.3} ms/path on L=2000: NN/MLE {:.2} (bound 0.10)",
            1e3 * nn,
            1e3 * mle,
            nn / mle
        ),
    )
}

fn c7_constraint_head() -> Check {
    let mut rng = path_rng(7001, 0);
    let mut valid = 0;
    let total = 10_000;
    for i in 0..total {
        let arch = Architecture { hidden1: rng.random_range(1..=12), hidden2: rng.random_range(1..=12) };
        let mut model = LstmEstimator::initialized(arch, &mut path_rng(7002, i));
        let scale = 10f64.powf(rng.random_range(-2.0..1.5));
        for w in model.weights_mut() {
            // Heavy-tailed draws reach saturated and extreme head outputs.
            let u: f64 = rng.random_range(-1.0..1.0);
            *w = scale * u / (1.0 - u.abs()).max(1e-3).sqrt();
        }
        let len = rng.random_range(1..40);
        let input = FeatureEncoding {
            gaps: (0..len).map(|_| -rng.random::<f64>().ln() * 10f64.powf(rng.random_range(-3.0..2.0))).collect(),
            directions: (0..len).map(|_| rng.random_range(1..=2)).collect(),
        };
        let p = model.forward(input.view());
        if validate(&p).is_ok() && p.mu > 0.0 && p.alpha1 > 0.0 && p.alpha2 > 0.0 && p.branching_ratio() < 1.0 {
            valid += 1;
        }
    }
    (valid == total, format!("{valid}/{total} random models produced valid parameters"))
}

fn stream_rows(bytes: &[u8], cfg: &StreamConfig) -> Vec<StreamRow> {
    let mut rows = Vec::new();
    run_stream(
        bytes,
        Path::new("synthetic.csv"),
        &Estimator::Mle,
        cfg,
        &mut |r| {
            rows.push(r.clone());
            Ok(())
        },
        &mut |_| {},
    )
    .unwrap();
    rows
}

fn quotes_bytes(seq: &EventSequence) -> Vec<u8> {
    let mut out = Vec::new();
    write_quotes_to(&mut out, &synthesize_quotes(seq, 100.0, 0.01).unwrap()).unwrap();
    out
}

fn c8_regime_switch() -> Check {
    let length = 2000;
    let doubled = STUDY_POINT.time_scaled(2.0);
    let before = simulate_with_rng(
        &STUDY_POINT,
        StopRule::EventCount(3 * length + length / 2),
        &MarkLaw::unit(),
        &mut path_rng(8001, 0),
    )
    .unwrap();
    let after =
        simulate_with_rng(&doubled, StopRule::EventCount(3 * length), &MarkLaw::unit(), &mut path_rng(8001, 1)).unwrap();
    let switch = before.horizon();
    let mut events = before.into_events();
    events.extend(after.iter().map(|e| MarkedEvent { time: e.time + switch, ..*e }));
    let seq = EventSequence::from_events(events).unwrap();

    let cfg = StreamConfig {
        stride: length,
        ingest: IngestConfig { dt: 1e-3, tick_size: 0.01 },
        ..StreamConfig::new(length)
    };
    let rows = stream_rows(&quotes_bytes(&seq), &cfg);
    let post: Vec<&StreamRow> = rows.iter().filter(|r| r.end_time > switch).take(2).collect();
    // Doubling every rate doubles the sampling SDs.
    let sds = MLE_SDS.map(|s| 2.0 * s);
    let truth = doubled.to_array();
    let within = |r: &StreamRow| {
        let e = r.params.to_array();
        (0..4).all(|k| (e[k] - truth[k]).abs() <= 3.0 * sds[k])
    };
    let hit = post.iter().position(|r| within(r));
    let describe = |r: &StreamRow| {
        let e = r.params.to_array();
        format!("({:.3}, {:.3}, {:.3}, {:.3})", e[0], e[1], e[2], e[3])
    };
    (
        post.len() == 2 && hit.is_some(),
        format!(
            "{} windows; post-switch windows {} vs new truth (0.6, 0.8, 1.4, 3.0); within 3 SD at window {}",
            rows.len(),
            post.iter().map(|r| describe(r)).collect::<Vec<_>>().join(", "),
            hit.map_or("none".into(), |h| (h + 1).to_string())
        ),
    )
}

fn c9_ingest_round_trip() -> Check {
    let marks = MarkLaw::symmetric(MarkDist::Geometric { p: 0.6 });
    let raw = simulate_with_rng(&STUDY_POINT, StopRule::EventCount(5000), &marks, &mut path_rng(9001, 0)).unwrap();
    // Spread events so no two share a 0.1 s sampling interval.
    let mut t = 0.0;
    let mut prev = 0.0;
    let spread: Vec<MarkedEvent> = raw
        .iter()
        .map(|e| {
            t += (e.time - prev) + 0.1;
            prev = e.time;
            MarkedEvent { time: t, ..*e }
        })
        .collect();
    let seq = EventSequence::from_events(spread).unwrap();

    // Through the on-disk quote format and back.
    let bytes = quotes_bytes(&seq);
    let mut stream = QuoteStream::new(bytes.as_slice(), Path::new("quotes.csv")).unwrap();
    let mut records = Vec::new();
    while let Some(r) = stream.next_record() {
        records.push(r.unwrap());
    }
    let ticks = TickSeries::new(records).unwrap();
    let filtered = filter_events(&ticks, &IngestConfig { dt: 0.1, tick_size: 0.01 }).unwrap().events;

    // And the events through the event CSV format.
    let mut csv = Vec::new();
    write_events_to(&mut csv, &filtered).unwrap();
    let reread = read_events_from(csv.as_slice(), Path::new("events.csv")).unwrap().events;

    let same = reread.len() == seq.len()
        && reread.iter().zip(seq.iter()).all(|(a, b)| a.direction == b.direction && a.mark == b.mark);
    let max_mark = seq.iter().map(|e| e.mark).max().unwrap();
    (
        same,
        format!("{} of {} events recovered with identical direction and mark (marks up to {max_mark})", reread.len(), seq.len()),
    )
}

// ---------------------------------------------------------------- driver

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut trained = None;
    let mut failures = 0;

    let mut run = |n: u32, name: &str, f: &mut dyn FnMut() -> Check| {
        if !wanted(n) {
            return;
        }
        let clock = Instant::now();
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(&mut *f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failures += 1;
        }
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "criterion {n} {}: {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64()
        );
        let _ = out.flush();
    };

    run(1, "likelihood oracle equivalence", &mut c1_likelihood_oracle);
    run(2, "gradient exactness", &mut c2_gradients);
    run(3, "volatility closed form vs Monte Carlo", &mut c3_volatility);
    run(4, "MLE sampling distribution", &mut c4_mle_sampling);
    run(5, "NN vs MLE accuracy", &mut || c5_nn_vs_mle(&mut trained));
    run(6, "speed ordering", &mut || c6_speed(trained.as_ref()));
    run(7, "constraint head property", &mut c7_constraint_head);
    run(8, "streaming regime switch", &mut c8_regime_switch);
    run(9, "ingestion round trip", &mut c9_ingest_round_trip);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
