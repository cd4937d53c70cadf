use amsp_core::estimator::{AmspConfig, EstimatorMode, FilterOptions, QSubstepMode};
use amsp_core::machine::MachineParams;
use amsp_core::montecarlo::*;
use amsp_core::pmu::SynthConfig;
use amsp_core::scenario::ScenarioConfig;

fn batch(parallel: bool) -> McReport {
    let mc = McConfig {
        trials: 6,
        base_seed: 77,
        segment_length: 10.0,
        modes: vec![
            EstimatorMode::Ekf,
            EstimatorMode::Cmsp(2),
            EstimatorMode::Amsp(AmspConfig { upper: 2e-3, lower: 2e-4, ..Default::default() }),
        ],
        parallel,
    };
    let opts = FilterOptions { q_substep: QSubstepMode::Scaled, ..Default::default() };
    run_mc(&ScenarioConfig::lightly_damped(), &MachineParams::default(), &SynthConfig::default(), &mc, &opts)
        .unwrap()
}

fn csv_bytes(r: &McReport) -> (Vec<u8>, Vec<u8>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_mmse_csv(r, &mut a).unwrap();
    write_curves_csv(r, &mut b).unwrap();
    (a, b)
}

#[test]
fn results_are_byte_identical_across_runs_and_schedulers() {
    let first = csv_bytes(&batch(false));
    assert_eq!(first, csv_bytes(&batch(false)));
    assert_eq!(first, csv_bytes(&batch(true)));
}

#[test]
fn report_shape() {
    let r = batch(false);
    assert_eq!(r.times.len(), 750);
    assert_eq!(r.segments.len(), 3);
    for m in &r.modes {
        assert_eq!(m.mse_curve.len(), 750);
        assert_eq!(m.segments.len(), 3);
        assert_eq!(m.trial_times.len(), 6);
        // equal-length segments average back to the whole run
        for i in 0..4 {
            let avg = m.segments.iter().map(|s| s[i]).sum::<f64>() / 3.0;
            assert!((avg - m.whole[i]).abs() <= 1e-12 * m.whole[i]);
        }
        let seg_time: f64 = m.segment_times.iter().sum();
        assert!((seg_time - m.wall_time.mean).abs() <= 1e-9 + 1e-6 * m.wall_time.mean);
    }
    let ekf = r.mode("ekf").unwrap();
    assert!(ekf.mean_mp.iter().all(|&v| v == 0.0));
    assert!(r.mode("cmsp2").unwrap().mean_mp.iter().all(|&v| v == 2.0));
    let mut text = Vec::new();
    write_mmse_csv(&r, &mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("mode,state,segment,mMSE\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 4 * 4);
}

#[test]
fn invalid_batches_are_rejected() {
    let mc = McConfig { trials: 0, ..Default::default() };
    let err = run_mc(&ScenarioConfig::lightly_damped(), &MachineParams::default(), &SynthConfig::default(), &mc, &Default::default());
    assert!(err.is_err());
}

#[test]
fn noiseless_equilibrium_gives_zero_error() {
    let scenario = ScenarioConfig { duration: 20.0, fault_start: 20.0, ..ScenarioConfig::lightly_damped() };
    let synth = SynthConfig { tve: 0.0, input_noise: 0.0, ..Default::default() };
    let mc = McConfig { trials: 1, segment_length: 10.0, modes: vec![EstimatorMode::Ekf], ..Default::default() };
    let r = run_mc(&scenario, &MachineParams::default(), &synth, &mc, &FilterOptions::default()).unwrap();
    let ekf = r.mode("ekf").unwrap();
    assert!(ekf.whole[0] < 1e-10, "delta mMSE {}", ekf.whole[0]);
}

#[test]
fn mmse_is_stable_in_the_trial_count() {
    let run = |trials| {
        let mc = McConfig { trials, base_seed: 5, segment_length: 10.0, modes: vec![EstimatorMode::Ekf], parallel: true };
        run_mc(&ScenarioConfig::lightly_damped(), &MachineParams::default(), &SynthConfig::default(), &mc, &FilterOptions::default())
            .unwrap()
            .modes[0]
            .whole
    };
    let (a, b) = (run(50), run(100));
    for i in 0..4 {
        assert!((a[i] - b[i]).abs() / b[i] < 0.2, "state {i}: {} vs {}", a[i], b[i]);
    }
}
