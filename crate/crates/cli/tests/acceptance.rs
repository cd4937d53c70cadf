//! Acceptance suite. Each test prints one PASS/FAIL line; timing checks are
//! only meaningful uncontended:
//!
//!     cargo test -p amsp-cli --test acceptance -- --nocapture --test-threads=1

use std::fs;
use std::sync::OnceLock;
use std::time::Instant;

use amsp_cli::commands::{cmd_mc, CURVES_FILE, MMSE_FILE, SEGMENT_TIMING_FILE};
use amsp_cli::ExperimentConfig;
use amsp_core::estimator::*;
use amsp_core::machine::*;
use amsp_core::model::{Discretization, DynamicModel, LinearModel, MeasCov, MeasJacobian, MeasVec, StateCov, StateVec};
use amsp_core::montecarlo::McReport;
use amsp_core::nalgebra::{Matrix2, Matrix2x4, Matrix4, SMatrix, SVector, Vector2, Vector4};
use amsp_core::nonlinearity::{index_h, index_phi, normalized_index, taylor_residual, transition_index, StatePerturbation};
use amsp_core::pmu::{add_phasor_noise, decimate, derive_noise_model, synthesize_decimated, SynthConfig};
use amsp_core::scenario::simulate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] criterion {n:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn info(n: u32, detail: String) {
    println!("[INFO] criterion {n:>2}   {detail}");
}

fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR")).as_ref()).unwrap()
}

fn lightly() -> ExperimentConfig {
    let mut cfg = shipped("lightly_damped.toml");
    cfg.paths.out = tempfile::tempdir().unwrap().keep();
    cfg
}

// 1 -------------------------------------------------------------------------

fn fd_columns<const M: usize>(f: impl Fn(&StateVec) -> SVector<f64, M>, x: &StateVec) -> SMatrix<f64, M, 4> {
    let h = 1e-6;
    let mut j = SMatrix::<f64, M, 4>::zeros();
    for c in 0..4 {
        let mut e = Vector4::zeros();
        e[c] = h;
        j.set_column(c, &((f(&(x + e)) - f(&(x - e))) / (2.0 * h)));
    }
    j
}

fn rel_err<const M: usize>(a: &SMatrix<f64, M, 4>, b: &SMatrix<f64, M, 4>) -> f64 {
    a.iter().zip(b.iter()).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max)
}

#[test]
fn criterion_01_jacobians() {
    let start = Instant::now();
    let p = MachineParams { k_d: 2.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = StateVector::new(
            rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI),
            rng.random_range(-0.05..=0.05),
            rng.random_range(0.0..=1.5),
            rng.random_range(0.0..=1.5),
        );
        let u = InputVector::new(rng.random_range(0.0..1.2), rng.random_range(0.5..3.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let xv = x.to_vector();
        let phi = |v: &StateVec| euler_substep(&StateVector::from_vector(v), &u, &p, 0.04).to_vector();
        let h = |v: &StateVec| measurement_fn(&StateVector::from_vector(v), &u, &p).to_vector();
        worst = worst.max(rel_err(&transition_jacobian(&x, &u, &p, 0.04), &fd_columns(phi, &xv)));
        worst = worst.max(rel_err(&measurement_jacobian(&x, &u, &p), &fd_columns(h, &xv)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(1, "Jacobian correctness", worst < 1e-6 && secs < 1.0, format!("max rel err {worst:.2e} (< 1e-6), {secs:.3} s (< 1 s)"));
}

// 2 -------------------------------------------------------------------------

#[test]
fn criterion_02_linear_gaussian_equivalence() {
    let a = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        -2.0, -0.3, 0.5, 0.0,
        0.0, 0.0, -0.5, 0.2,
        0.1, 0.0, 0.0, -1.0,
    );
    let c = Matrix2x4::new(1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 1.0, -0.3);
    let model = LinearModel { a, c };
    let dt = 0.04;
    let noise = NoiseModel::diagonal([1e-4, 4e-4, 1e-4, 1e-4], [1e-2, 2e-2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = Vector4::new(1.0, 0.0, -0.5, 0.2);
    let f = Matrix4::identity() + a * dt;
    let zs: Vec<MeasVec> = (0..500)
        .map(|_| {
            x = f * x + Vector4::from_fn(|i, _| 0.01 * rng.random_range(-1.0..1.0) * (i + 1) as f64);
            c * x + Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))
        })
        .collect();
    let us = vec![(); 500];
    let x0 = GaussianBelief::new(Vector4::zeros(), Matrix4::identity());
    let run = run_filter_with(&model, &zs, &us, x0, &noise, &EstimatorMode::Ekf, dt, &FilterOptions::default()).unwrap();

    // textbook Kalman filter
    let (mut m, mut pc) = (x0.mean, x0.cov);
    let mut worst: f64 = 0.0;
    for k in 1..500 {
        m = f * m;
        pc = f * pc * f.transpose() + noise.q;
        let s = c * pc * c.transpose() + noise.r;
        let gain = pc * c.transpose() * s.try_inverse().unwrap();
        m += gain * (zs[k] - c * m);
        pc = (Matrix4::identity() - gain * c) * pc;
        let e = &run.estimates[k];
        worst = worst.max((e.mean - m).amax()).max((e.cov - pc).amax());
    }
    verdict(2, "linear-Gaussian equivalence", worst <= 1e-10, format!("max deviation from KF {worst:.2e} over 500 steps (<= 1e-10)"));
}

// 3 -------------------------------------------------------------------------

/// `Φ(x) = x + dt f(x)` with `f₀ = x₀²`, so over `dt = 1` the residual of the
/// first component is exactly `δx₀²`.
struct QuadraticToy;

impl DynamicModel for QuadraticToy {
    type Input = ();
    fn derivative(&self, x: &StateVec, _: &()) -> StateVec {
        Vector4::new(x[0] * x[0], 0.0, 0.0, 0.0)
    }
    fn derivative_jacobian(&self, x: &StateVec, _: &()) -> StateCov {
        let mut j = Matrix4::zeros();
        j[(0, 0)] = 2.0 * x[0];
        j
    }
    fn measure(&self, x: &StateVec, _: &()) -> MeasVec {
        Vector2::new(x[0], x[1])
    }
    fn measure_jacobian(&self, _: &StateVec, _: &()) -> MeasJacobian {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    }
}

#[test]
fn criterion_03_index_zeroing() {
    let p = MachineParams::default();
    let q = Matrix4::from_diagonal(&Vector4::new(1e-6, 1e-9, 1e-7, 1e-5));
    let r: MeasCov = Matrix2::from_diagonal(&Vector2::new(1.6e-3, 1.6e-3));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_zero: f64 = 0.0;
    for _ in 0..100 {
        let x = StateVector::new(rng.random_range(-3.0..3.0), rng.random_range(-0.05..0.05), rng.random_range(0.0..1.5), rng.random_range(0.0..1.5));
        let u = InputVector::new(0.9, 2.0, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (_, n_phi) = index_phi(&x, &StatePerturbation::zero(), &u, &p, 0.04, &q).unwrap();
        let (_, n_h) = index_h(&x, &StatePerturbation::zero(), &u, &p, &r).unwrap();
        worst_zero = worst_zero.max(n_phi).max(n_h);
    }

    let mut worst_quad: f64 = 0.0;
    for (x0, dx0, q0) in [(1.0, 0.1, 1.0), (0.3, -0.02, 1e-6), (-2.0, 0.5, 0.25), (0.5, 0.05, 1e-3)] {
        let x = Vector4::new(x0, 0.2, -0.1, 0.4);
        let dx = StatePerturbation(Vector4::new(dx0, 0.0, 0.0, 0.0));
        let qq = Matrix4::from_diagonal(&Vector4::new(q0, 1.0, 1.0, 1.0));
        let (_, n) = transition_index(&QuadraticToy, &Discretization::default(), &x, &dx, &(), 1.0, &qq).unwrap();
        let expected: f64 = dx0.powi(4) / q0;
        worst_quad = worst_quad.max((n - expected).abs() / expected.max(1.0));
    }
    // scalar form of the same closed form
    let g = |v: &SVector<f64, 1>| SVector::<f64, 1>::new(v[0] * v[0]);
    let eps = taylor_residual(g, &SMatrix::<f64, 1, 1>::new(2.0), &SVector::<f64, 1>::new(1.0), &SVector::<f64, 1>::new(0.1));
    let n = normalized_index(&eps, &SMatrix::<f64, 1, 1>::new(1.0)).unwrap();
    worst_quad = worst_quad.max((n - 1e-4).abs());

    let pass = worst_zero <= 1e-12 && worst_quad <= 1e-12;
    verdict(3, "index zeroing", pass, format!("max n at dx=0 {worst_zero:.1e} (<= 1e-12), quadratic closed-form error {worst_quad:.1e} (<= 1e-12)"));
}

// 4 -------------------------------------------------------------------------

#[test]
fn criterion_04_multi_step_convergence() {
    let a = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        -4.0, -0.4, 0.0, 0.5,
        0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.3, -0.6,
    );
    let model = LinearModel { a, c: Matrix2x4::zeros() };
    let dt = 0.04;
    let x = Vector4::new(1.0, -0.5, 0.8, 0.2);
    let exact = (a * dt).exp() * x;
    let noise = NoiseModel::diagonal([1e-6; 4], [1.0; 2]).unwrap();
    let b = GaussianBelief::new(x, Matrix4::identity() * 1e-3);
    let errs: Vec<f64> = (0..=6)
        .map(|mp| {
            let pred = multi_step_predict(&model, &Discretization::default(), &b, &(), dt, mp, &noise, QSubstepMode::Full);
            (pred.mean - exact).norm()
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|r| (r - 2.0).abs() <= 0.3);
    verdict(4, "multi-step convergence", pass, format!("error ratios per M_p step {:?} (2 +/- 0.3)", ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()));
}

// 5, 6 ----------------------------------------------------------------------

struct Fixture {
    cfg: ExperimentConfig,
    p: MachineParams,
    dec: amsp_core::scenario::TruthTrajectory,
    noise: amsp_core::pmu::DerivedNoise,
    k_fault: usize,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = lightly();
        let p = cfg.machine_params();
        let s = cfg.scenario();
        let dec = decimate(&simulate(&s, &p).unwrap(), cfg.synth.pmu_rate).unwrap();
        let noise = derive_noise_model(&dec).unwrap();
        let k_fault = dec.times.iter().position(|t| *t >= s.fault_start - 1e-9).unwrap();
        Fixture { cfg, p, dec, noise, k_fault }
    })
}

fn filter(f: &Fixture, seed: u64, mode: &EstimatorMode, opts: &FilterOptions) -> FilterRun {
    let s = synthesize_decimated(&f.dec, &SynthConfig { seed, ..f.cfg.synth });
    run_filter(&s.z_seq, &s.u_seq, &f.p, &f.noise.noise, &f.noise.p0, mode, 1.0 / f.cfg.synth.pmu_rate, opts).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

#[test]
fn criterion_05_index_behavior() {
    let f = fixture();
    let opts = f.cfg.estimator.options();
    let post = f.k_fault..f.k_fault + 125;
    let pre = 5..f.k_fault;
    let (mut level, mut reduction) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let r0 = filter(f, seed, &EstimatorMode::Cmsp(0), &opts);
        let r3 = filter(f, seed, &EstimatorMode::Cmsp(3), &opts);
        let m = |r: &FilterRun, range: std::ops::Range<usize>| median(r.substep_index_trace[range].iter().map(|i| i.n_phi).collect());
        level.push(m(&r0, post.clone()) / m(&r0, pre.clone()));
        reduction.push(m(&r0, post.clone()) / m(&r3, post.clone()));
    }
    let (lv, rd) = (median(level), median(reduction));
    verdict(5, "index behavior", lv >= 10.0 && rd > 1.0, format!("post/pre median n(Phi) {lv:.3e} (>= 10), paired M_p 0->3 reduction {rd:.3e} (> 1), 20 trials"));
}

fn adaptivity_ok(run: &FilterRun, k_fault: usize) -> (bool, bool) {
    let steady = run.mp_trace[6..k_fault].iter().all(|&m| m == 0);
    let reacts = run.mp_trace[k_fault..=k_fault + 10].iter().any(|&m| m >= 2);
    (steady, reacts)
}

#[test]
fn criterion_06_amsp_adaptivity() {
    let f = fixture();
    let mode = f.cfg.estimator.mode();
    let opts = f.cfg.estimator.options();
    let run = filter(f, f.cfg.mc.base_seed, &mode, &opts);
    let (steady, reacts) = adaptivity_ok(&run, f.k_fault);
    let first = run.mp_trace[f.k_fault..].iter().position(|&m| m >= 2).unwrap_or(usize::MAX);

    let trials = f.cfg.mc.trials as u64;
    let ok = (0..trials).filter(|&n| adaptivity_ok(&filter(f, f.cfg.mc.base_seed ^ n, &mode, &opts), f.k_fault) == (true, true)).count();
    info(6, format!("{ok}/{trials} Monte-Carlo trials show both behaviors"));
    let defaults = filter(f, f.cfg.mc.base_seed, &EstimatorMode::Amsp(AmspConfig::default()), &FilterOptions::default());
    info(6, format!("library defaults U=0.3 L=0.005: max M_p after fault {}", defaults.mp_trace[f.k_fault..].iter().max().unwrap()));

    verdict(6, "AMSP adaptivity", steady && reacts, format!("M_p = 0 on steps 6..{} ({steady}), M_p >= 2 reached {first} steps after the fault (<= 10)", f.k_fault));
}

// 7, 8 ----------------------------------------------------------------------

fn lightly_report() -> &'static McReport {
    static R: OnceLock<McReport> = OnceLock::new();
    R.get_or_init(|| {
        let start = Instant::now();
        let r = cmd_mc(&lightly()).unwrap();
        println!("[INFO] Monte-Carlo batch ({} trials x {} modes) took {:.1} s", r.trials, r.modes.len(), start.elapsed().as_secs_f64());
        r
    })
}

#[test]
fn criterion_07_accuracy_time_tradeoff() {
    let start = Instant::now();
    let r = lightly_report();
    let batch_secs = start.elapsed().as_secs_f64();
    let (a, c) = (r.mode("amsp").unwrap(), r.mode("cmsp5").unwrap());
    let rel: Vec<f64> = (0..4).map(|i| (a.whole[i] - c.whole[i]).abs() / c.whole[i]).collect();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    let whole = a.wall_time.mean / c.wall_time.mean;
    let steady = a.segment_times[0] / c.segment_times[0];
    let pass = r.trials == 100 && worst <= 0.25 && whole <= 0.7 && steady <= 0.5 && batch_secs < 300.0;
    verdict(
        7,
        "accuracy/time trade-off",
        pass,
        format!(
            "rel mMSE diff {:?} (<= 0.25), time ratio {whole:.3} (<= 0.70), steady segment ratio {steady:.3} (<= 0.50), batch {batch_secs:.1} s (< 300 s)",
            rel.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_08_cmsp_monotonicity() {
    let r = lightly_report();
    let labels = ["ekf", "cmsp1", "cmsp3", "cmsp5"];
    let d: Vec<f64> = labels.iter().map(|l| r.mode(l).unwrap().whole[0]).collect();
    let excess: Vec<f64> = d.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let pass = excess.iter().all(|e| *e <= 0.05);
    verdict(8, "CMSP monotonicity", pass, format!("delta mMSE for M_p 0,1,3,5 {:?}, worst relative increase {:.3} (<= 0.05)", d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(), excess.iter().copied().fold(f64::MIN, f64::max)));

    let mut literal = lightly();
    literal.estimator.q_substep = QSubstepMode::Full;
    literal.mc.modes = labels.map(String::from).to_vec();
    let lr = cmd_mc(&literal).unwrap();
    let ld: Vec<String> = labels.iter().map(|l| format!("{:.3e}", lr.mode(l).unwrap().whole[0])).collect();
    info(8, format!("with full Q per sub-step: delta mMSE for M_p 0,1,3,5 {ld:?}"));
}

// 9 -------------------------------------------------------------------------

#[test]
fn criterion_09_determinism() {
    let (a, b) = (lightly(), lightly());
    cmd_mc(&a).unwrap();
    cmd_mc(&b).unwrap();
    let same = |f: &str| fs::read(a.paths.out.join(f)).unwrap() == fs::read(b.paths.out.join(f)).unwrap();
    let mmse = same(MMSE_FILE);
    let curves = same(CURVES_FILE);
    let seg_rows = fs::read_to_string(a.paths.out.join(SEGMENT_TIMING_FILE)).unwrap().lines().count();
    verdict(9, "determinism", mmse && curves, format!("{MMSE_FILE} identical: {mmse}, {CURVES_FILE} identical: {curves} (timing files excepted, {seg_rows} segment timing rows)"));
}

// 10 ------------------------------------------------------------------------

#[test]
fn criterion_10_noise_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (re, im) = (0.83, -0.41);
    let mag2 = re * re + im * im;
    let n = 100_000;
    let sum: f64 = (0..n)
        .map(|_| {
            let (r, i) = add_phasor_noise(re, im, 0.04, &mut rng);
            ((r - re).powi(2) + (i - im).powi(2)) / mag2
        })
        .sum();
    let rms = (sum / n as f64).sqrt();
    let rel = (rms / 0.04 - 1.0).abs();
    verdict(10, "noise calibration", rel <= 0.02, format!("RMS TVE {rms:.5} over 1e5 samples, relative deviation {rel:.4} (<= 0.02)"));
}
