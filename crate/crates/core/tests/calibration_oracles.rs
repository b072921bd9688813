use gaussvol::calibration::{calibrate, synthetic_skews, CalibrationProblem, Param, Targets};
use gaussvol::pricing::DEFAULT_SKEW_STEP;
use gaussvol::validation::calibrated_rough;

#[test]
fn skew_only_problem_recovers_rough_parameters() {
    let truth = calibrated_rough();
    let n = 48;
    let targets = synthetic_skews(&truth, n, &[0.05, 0.1, 0.25, 0.5, 1.0], DEFAULT_SKEW_STEP).unwrap();
    let problem = CalibrationProblem::new(
        truth,
        Targets::Skew(targets),
        vec![Param::Nu, Param::Rho, Param::Hurst],
        vec![0.4, -0.7, 0.3],
        500,
        n,
    );
    let res = calibrate(&problem).unwrap();
    let (nu, rho, h) = (res.params[0], res.params[1], res.params[2]);
    assert!((nu - 0.5231458).abs() / 0.5231458 <= 0.05, "{:?}", res.params);
    assert!((rho + 0.9436174).abs() <= 0.05, "{:?}", res.params);
    assert!((h - 0.2234273).abs() <= 0.03, "{:?}", res.params);
}
