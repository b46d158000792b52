use std::fs;
use std::path::Path;

use manip_rl_harness::config::{Algorithm, Architecture, EnvId, RunConfig};
use manip_rl_harness::sweep::{load_config_dir, sweep, write_table};
use manip_rl_harness::train::{parse_summary_csv, run_training};

fn small(algorithm: Algorithm, arch: Architecture, out: &Path) -> RunConfig {
    let mut c = RunConfig {
        algorithm,
        env: EnvId::Reach,
        architecture: arch,
        baseline_hidden: vec![8],
        max_episodes: Some(4),
        n_test: 2,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    c.reach.horizon = 30;
    c.trpo.batch_size = 60;
    c.vpg.batch_size = 60;
    c
}

#[test]
fn single_config_table_equals_run_summary() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let direct = run_training(&small(Algorithm::Trpo, Architecture::Custom(vec![6]), a.path())).unwrap();
    let report = sweep(&[small(Algorithm::Trpo, Architecture::Custom(vec![6]), b.path())], 1).unwrap();
    assert!(report.all_succeeded());
    assert_eq!(report.table, direct.rows);
    assert_eq!(report.table.len(), 1);
}

#[test]
fn parallel_sweep_matches_sequential() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfgs = |dir: &Path| {
        vec![
            small(Algorithm::Trpo, Architecture::Custom(vec![6]), dir),
            small(Algorithm::Vpg, Architecture::Custom(vec![5, 3]), dir),
        ]
    };
    let seq = sweep(&cfgs(a.path()), 1).unwrap();
    let par = sweep(&cfgs(b.path()), 2).unwrap();
    assert_eq!(seq.table, par.table);
    for cfg in cfgs(a.path()) {
        let rel = Path::new(&cfg.run_name()).join("seed_0/curve.csv");
        assert_eq!(
            fs::read(a.path().join(&rel)).unwrap(),
            fs::read(b.path().join(&rel)).unwrap()
        );
    }
}

#[test]
fn architecture_sweep_reports_every_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let cfgs: Vec<RunConfig> = Architecture::SWEEP
        .iter()
        .map(|a| small(Algorithm::Trpo, a.clone(), dir.path()))
        .collect();
    let report = sweep(&cfgs, 2).unwrap();
    assert!(report.all_succeeded(), "{:?}", report.failures());
    assert_eq!(report.table.len(), 4);
    let mut archs: Vec<&str> = report.table.iter().map(|r| r.arch.as_str()).collect();
    archs.sort();
    assert_eq!(archs, ["100x100", "150x100x50", "32x32", "400x300"]);
    for row in &report.table {
        assert!(row.episodes_required.is_finite() && row.episodes_required >= 0.0);
        assert!(row.episodes_required <= 4.0);
    }
    let table = dir.path().join("sweep_summary.csv");
    write_table(&report, &table).unwrap();
    assert_eq!(parse_summary_csv(&fs::read_to_string(&table).unwrap()).unwrap(), report.table);
}

#[test]
fn failing_run_is_reported_without_stopping_others() {
    let dir = tempfile::tempdir().unwrap();
    let good = small(Algorithm::Trpo, Architecture::Custom(vec![4]), dir.path());
    let bad = RunConfig {
        name: Some("broken".into()),
        n_test: 0,
        ..good.clone()
    };
    let report = sweep(&[bad, good], 2).unwrap();
    assert!(!report.all_succeeded());
    let failures = report.failures();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].0, "broken");
    assert!(failures[0].1.contains("n_test"));
    assert_eq!(report.table.len(), 1);
}

#[test]
fn config_directory_is_read_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.toml"), "algorithm = \"vpg\"").unwrap();
    fs::write(dir.path().join("a.toml"), "algorithm = \"dqn_naf\"").unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let cfgs = load_config_dir(dir.path()).unwrap();
    let algos: Vec<Algorithm> = cfgs.iter().map(|(_, c)| c.algorithm).collect();
    assert_eq!(algos, [Algorithm::DqnNaf, Algorithm::Vpg]);
}
