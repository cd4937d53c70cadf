use amsp_core::io::{ingest_trajectory, load_measurements, save_measurements, save_trajectory};
use amsp_core::machine::MachineParams;
use amsp_core::pmu::{synthesize, SynthConfig};
use amsp_core::scenario::{simulate, ScenarioConfig};
use amsp_core::Error;

#[test]
fn simulated_trajectory_survives_export_and_ingest() {
    let cfg = ScenarioConfig { duration: 11.0, ..ScenarioConfig::lightly_damped() };
    let traj = simulate(&cfg, &cfg.machine_params(&MachineParams::default())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    save_trajectory(&traj, &path).unwrap();
    assert_eq!(ingest_trajectory(&path).unwrap(), traj);

    let series = synthesize(&traj, &SynthConfig::default()).unwrap();
    let mpath = dir.path().join("measurements.csv");
    save_measurements(&series, &mpath).unwrap();
    let back = load_measurements(&mpath).unwrap();
    assert_eq!(back.times, series.times);
    assert_eq!(back.z_seq, series.z_seq);
    assert_eq!(back.u_seq, series.u_seq);
}

#[test]
fn uneven_grid_is_rejected_with_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = String::from("t,delta,domega,eq_p,ed_p,T_m,E_fd,i_R,i_I,e_R,e_I\n");
    for (k, t) in [0.0, 0.001, 0.002, 0.0035].iter().enumerate() {
        text.push_str(&format!("{t},{k},0,1,0.3,0.9,2,0.9,0.1,0.8,0.6\n"));
    }
    std::fs::write(&path, text).unwrap();
    match ingest_trajectory(&path) {
        Err(Error::Ingestion { row, .. }) => assert_eq!(row, 4),
        other => panic!("{other:?}"),
    }
}
