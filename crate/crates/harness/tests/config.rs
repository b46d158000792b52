use manip_rl_harness::config::{Algorithm, Architecture, EnvId, RunConfig};
use proptest::prelude::*;

fn arb_arch() -> impl Strategy<Value = Architecture> {
    prop_oneof![
        Just(Architecture::H32x32),
        Just(Architecture::H100x100),
        Just(Architecture::H150x100x50),
        Just(Architecture::H400x300),
        prop::collection::vec(1usize..512, 1..4).prop_map(|l| Architecture::parse(
            &l.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
        )
        .unwrap()),
    ]
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![Just(Algorithm::Vpg), Just(Algorithm::Trpo), Just(Algorithm::DqnNaf)],
        prop_oneof![Just(EnvId::Reach), Just(EnvId::Grasp)],
        arb_arch(),
        prop::option::of(1usize..10_000),
        prop::collection::vec(0..=i64::MAX as u64, 1..5),
        (1e-5f64..0.1, 0.5f64..1.0, 0.0f64..=1.0, 1e-6f64..1.0),
        prop::option::of("[a-z_]{1,12}"),
    )
        .prop_map(|(algorithm, env, architecture, max_episodes, seeds, (kl, gamma, lambda, xi), name)| {
            let mut c = RunConfig {
                name,
                algorithm,
                env,
                architecture,
                max_episodes,
                seeds,
                ..RunConfig::default()
            };
            c.trpo.max_kl = kl;
            c.trpo.gae.gamma = gamma;
            c.trpo.gae.lambda = lambda;
            c.naf.soft_update = xi;
            c.naf.gamma = gamma;
            c.vpg.learning_rate = kl;
            c
        })
}

proptest! {
    #[test]
    fn toml_round_trip_is_identity(cfg in arb_config()) {
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn empty_file_gives_defaults() {
    let c = RunConfig::from_toml("").unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!(c.trpo.max_kl, 0.01);
    assert_eq!(c.trpo.cg_iters, 10);
    assert_eq!(c.trpo.gae.gamma, 0.99);
    assert_eq!(c.trpo.gae.lambda, 0.97);
    assert_eq!(c.naf.soft_update, 1e-3);
    assert_eq!(c.n_test, 10);
    assert_eq!(c.episodes_per_update(), 20);
}

#[test]
fn partial_file_and_architecture_forms() {
    let c = RunConfig::from_toml(
        "algorithm = \"dqn_naf\"\nenv = \"grasp\"\narchitecture = [150, 100, 50]\n[naf]\nminibatch_size = 32\n",
    )
    .unwrap();
    assert_eq!(c.architecture, Architecture::H150x100x50);
    assert_eq!(c.run_name(), "dqn_naf_grasp_150x100x50_32");
    assert_eq!(c.max_episodes(), 5000);
    assert_eq!(c.eval_every(), 10);
    let d = RunConfig::from_toml("architecture = \"400x300\"").unwrap();
    assert_eq!(d.architecture, Architecture::H400x300);
}

#[test]
fn unknown_fields_and_bad_values_are_rejected() {
    assert!(RunConfig::from_toml("algorithm = \"ppo\"").is_err());
    assert!(RunConfig::from_toml("max_episode = 10").is_err());
    assert!(RunConfig::from_toml("architecture = \"100x\"").is_err());
    assert!(RunConfig::from_toml("architecture = []").is_err());
}

#[test]
fn invalid_config_reports_every_bad_field() {
    let mut c = RunConfig {
        n_test: 0,
        seeds: vec![3, 3],
        baseline_hidden: vec![0],
        eval_every: Some(0),
        ..RunConfig::default()
    };
    c.trpo.max_kl = -1.0;
    c.reach.horizon = 0;
    let errs = c.validate().unwrap_err();
    let joined = errs.join("\n");
    for field in ["n_test", "seeds", "baseline_hidden", "eval_every", "reach", "trpo"] {
        assert!(joined.contains(field), "{field} missing from {joined}");
    }
    assert_eq!(errs.len(), 6);
}
