use gaussvol::charfn::{markovian_transform, MarkovianParams};
use gaussvol::kernels::{InputCurveSpec, KernelSpec, ModelConfig};
use gaussvol::montecarlo::{mc_call_prices, SimulationPlan};
use gaussvol::pricing::{CosOptions, CosPricer};
use num_complex::Complex64;

#[test]
fn brownian_prices_bracket_riccati_cos() {
    let model = ModelConfig {
        s0: 1.0,
        kernel: KernelSpec::Constant,
        curve: InputCurveSpec::Affine { x0: 0.1, theta: 0.1 },
        kappa: 0.0,
        nu: 0.25,
        rho: -0.7,
        maturity: 1.0,
    };
    let p = MarkovianParams::from_model(&model).unwrap();
    let zero = Complex64::new(0.0, 0.0);
    let oracle = CosPricer::from_charfn(
        1.0,
        1.0,
        |z| markovian_transform(&p, Complex64::new(0.0, z), zero),
        &CosOptions::default(),
    )
    .unwrap();
    let strikes = [0.9, 1.0, 1.1];
    let plan = SimulationPlan {
        n_steps: 250,
        n_paths: 100_000,
        seed: 2024,
        antithetic: true,
    };
    let est = mc_call_prices(&model, &plan, &strikes, 1.0).unwrap();
    for (k, e) in strikes.iter().zip(&est) {
        let want = oracle.call(*k);
        assert!(e.contains(want), "K={k}: {} +- {} vs {want}", e.mean, 1.96 * e.stderr);
    }
}

#[test]
fn rough_skew_agrees_with_simulation() {
    use gaussvol::montecarlo::PathSimulator;
    use gaussvol::pricing::{bs_vega, implied_vol_otm, skew_from_pricer, DEFAULT_SKEW_STEP};
    use gaussvol::validation::calibrated_rough;

    let t = 0.25;
    let h = DEFAULT_SKEW_STEP;
    let model = calibrated_rough();
    let pricer = CosPricer::from_model(&model, 256, t, &CosOptions::default()).unwrap();
    let skew = skew_from_pricer(&pricer, h).unwrap().skew;
    assert!(skew < 0.0);

    let (up, down) = (h.exp(), (-h).exp());
    let plan = SimulationPlan {
        n_steps: 256,
        n_paths: 100_000,
        seed: 99,
        antithetic: true,
    };
    let sim = PathSimulator::new(&model.with_maturity(t), plan.n_steps).unwrap();
    let est = sim
        .estimate(&plan, 2, |v, out| {
            let s = v.log_s.exp();
            out[0] = (s - up).max(0.0);
            out[1] = (down - s).max(0.0);
        })
        .unwrap();
    let iv_up = implied_vol_otm(est[0].mean, 0.0, 1.0, up, t).unwrap();
    let iv_down = implied_vol_otm(0.0, est[1].mean, 1.0, down, t).unwrap();
    let mc_skew = (iv_up - iv_down) / (2.0 * h);
    // the two prices share paths; bound the difference noise by the sum of errors
    let se = (est[0].stderr / bs_vega(1.0, up, t, iv_up) + est[1].stderr / bs_vega(1.0, down, t, iv_down)) / (2.0 * h);
    assert!((mc_skew - skew).abs() < 3.0 * se, "cos {skew} vs mc {mc_skew} +- {se}");
}
