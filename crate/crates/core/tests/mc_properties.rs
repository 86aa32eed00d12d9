use fcsv_core::fourier;
use fcsv_core::mc::{price_payoff, Fixing, McConfig, McEstimate, PayoffSpec};
use fcsv_core::{integrated_variance, presets, MarketCurves, ModelParams, OptionKind, OptionSpec, QuadratureConfig};

fn unit() -> MarketCurves {
    MarketCurves::flat(1.0, 1.0).unwrap()
}

fn mc(payoff: &PayoffSpec, cfg: &McConfig, p: &ModelParams) -> McEstimate {
    price_payoff(payoff, cfg, &unit(), p).unwrap()
}

#[test]
fn antithetic_cuts_forward_error_without_vol_of_vol() {
    let p = ModelParams {
        alpha: 0.0,
        ..presets::sec5()
    };
    let payoff = PayoffSpec::Forward {
        expiry: 1.0,
        settlement: 2.0,
    };
    let plain = mc(&payoff, &McConfig::new(20_000, 50, 1.0, 3).exact(vec![2.0]), &p);
    let anti = mc(
        &payoff,
        &McConfig::new(20_000, 50, 1.0, 3).exact(vec![2.0]).with_antithetic(true),
        &p,
    );
    assert_eq!(anti.n_paths, 20_000);
    // Lognormal F: corr(e^{sZ}, e^{-sZ}) = (e^{-s^2} - 1) / (e^{s^2} - 1), and
    // pairing scales the standard error by sqrt(1 + corr).
    let s2 = integrated_variance(0.0, 1.0, 2.0, &p).unwrap();
    let corr = (-s2).exp_m1() / s2.exp_m1();
    let expected = (1.0 + corr).sqrt();
    let ratio = anti.std_error / plain.std_error;
    assert!(
        ratio < 1.0 && (ratio / expected - 1.0).abs() < 0.05,
        "{ratio} vs {expected}"
    );
    for e in [plain, anti] {
        assert!((e.value - 1.0).abs() < 4.0 * e.std_error, "{e:?}");
    }
}

#[test]
fn step_refinement_stays_within_noise() {
    let p = presets::fig1();
    let payoff = PayoffSpec::Vanilla {
        expiry: 1.0,
        strike: 1.0,
        option: OptionKind::Call,
    };
    let coarse = mc(&payoff, &McConfig::new(40_000, 50, 1.0, 5).exact(vec![1.0]), &p);
    let fine = mc(&payoff, &McConfig::new(40_000, 100, 1.0, 5).exact(vec![1.0]), &p);
    let noise = coarse.std_error.hypot(fine.std_error);
    assert!(
        (coarse.value - fine.value).abs() < 3.0 * noise,
        "{coarse:?} vs {fine:?}"
    );
}

#[test]
fn early_exercise_matches_fourier() {
    let p = presets::fig1();
    let q = QuadratureConfig::default();
    for (strike, kind) in [(1.1, OptionKind::Call), (0.9, OptionKind::Put)] {
        let spec = OptionSpec::early_exercise(1.0, 1.5, strike, kind);
        let reference = fourier::price(&spec, &unit(), &p, &q).unwrap().price;
        let payoff = PayoffSpec::EarlyExercise {
            expiry: 1.0,
            settlement: 1.5,
            strike,
            option: kind,
        };
        let est = mc(&payoff, &McConfig::new(60_000, 100, 1.0, 11).exact(vec![1.5]), &p);
        assert!(
            (est.value - reference).abs() < 4.0 * est.std_error,
            "K={strike}: {est:?} vs {reference}"
        );
    }
}

fn strip() -> Vec<Fixing> {
    (0..4)
        .map(|i| {
            let t = 1.0 + 0.25 * i as f64 / 3.0;
            Fixing {
                time: t,
                settlement: t + 0.25,
            }
        })
        .collect()
}

fn asian(option: OptionKind) -> PayoffSpec {
    PayoffSpec::AsianPrompt {
        fixings: strip(),
        strike: 1.0,
        option,
        payment: 1.5,
    }
}

fn strip_config(seed: u64) -> McConfig {
    let settles = strip().iter().map(|f| f.settlement).collect();
    // 1.25 / 60 puts every fixing on a grid node.
    McConfig::new(30_000, 60, 1.25, seed).exact(settles)
}

#[test]
fn asian_prompt_parity() {
    let p = presets::fig1();
    let call = mc(&asian(OptionKind::Call), &strip_config(9), &p);
    let put = mc(&asian(OptionKind::Put), &strip_config(9), &p);
    // Flat unit forwards: the average is worth F = K = 1, so C - P = 0.
    let diff = call.value - put.value;
    assert!(diff.abs() < 4.0 * (call.std_error + put.std_error), "{diff}");
}

#[test]
fn asian_prompt_below_average_of_vanillas() {
    let p = presets::fig1();
    let q = QuadratureConfig::default();
    let est = mc(&asian(OptionKind::Call), &strip_config(13), &p);
    let strip_mean: f64 = strip()
        .iter()
        .map(|f| {
            let spec = OptionSpec::early_exercise(f.time, f.settlement, 1.0, OptionKind::Call);
            fourier::price(&spec, &unit(), &p, &q).unwrap().price
        })
        .sum::<f64>()
        / 4.0;
    assert!(est.value > 0.0);
    assert!(est.value < strip_mean + 3.0 * est.std_error, "{est:?} vs {strip_mean}");
    // Averaging over three months barely diversifies a 1y option.
    assert!(est.value > 0.8 * strip_mean, "{est:?} vs {strip_mean}");
}

#[test]
fn thread_count_does_not_change_results() {
    let p = presets::fig1();
    let payoff = asian(OptionKind::Call);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc(&payoff, &strip_config(21), &p))
    };
    assert_eq!(run(1), run(5));
}
