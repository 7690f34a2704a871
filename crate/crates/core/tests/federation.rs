use fluxfed::datagen::{gen_synthetic_federation, Federation, ShiftType};
use fluxfed::federation::{
    evaluate_known_association, infer_test_clients, majority_clusters, ExperimentConfig, FederationState, Mode,
    Simulation,
};
use fluxfed::FluxError;

fn config(mode: Mode) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        rounds: 6,
        ..ExperimentConfig::with_shift(ShiftType::FeatureShift)
    }
}

fn data(config: &ExperimentConfig) -> Federation {
    gen_synthetic_federation(&config.synthetic(), &config.shift(), config.seed).unwrap()
}

fn same_groups(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn flux_matches_fedavg_until_the_trigger() {
    let mut flux_cfg = config(Mode::Flux);
    flux_cfg.rounds = 10;
    // only the 0.8 R ceiling can fire: clustering starts in round 9
    flux_cfg.trigger_threshold = -1.0;
    let fedavg_cfg = ExperimentConfig {
        mode: Mode::FedAvg,
        ..flux_cfg.clone()
    };
    let fed = data(&flux_cfg);
    let mut flux = Simulation::new(&flux_cfg, &fed).unwrap();
    let mut fedavg = Simulation::new(&fedavg_cfg, &fed).unwrap();
    for round in 1..=10 {
        let a = flux.run_round().unwrap();
        let b = fedavg.run_round().unwrap();
        if round <= 8 {
            assert_eq!(a, b, "round {round}");
            assert_eq!(flux.state.models, fedavg.state.models);
        }
        assert_eq!(a.triggered, round == 9);
    }
    assert_eq!(flux.state.trigger_round, Some(9));
    assert_eq!(fedavg.state.models.len(), 1);
    assert!(fedavg.state.clusters.is_none());
}

#[test]
fn model_count_follows_trigger() {
    let cfg = config(Mode::Flux);
    let fed = data(&cfg);
    let mut sim = Simulation::new(&cfg, &fed).unwrap();
    let logs = sim.run(|_| Ok(())).unwrap();
    let trigger = sim.state.trigger_round.expect("ceiling guarantees a trigger");
    for entry in &logs {
        let expected = if entry.round < trigger { 1 } else { 3 };
        assert_eq!(entry.m, expected, "round {}", entry.round);
        assert_eq!(entry.param_count, cfg.model_shape().param_count());
    }
    assert_eq!(sim.state.accuracy.len(), cfg.rounds);
    assert!(same_groups(&sim.state.clusters.as_ref().unwrap().assignment, &fed.ground_truth()));
}

#[test]
fn kmeans_prior_recovers_fixture() {
    let cfg = config(Mode::FluxPrior);
    let fed = data(&cfg);
    let mut sim = Simulation::new(&cfg, &fed).unwrap();
    sim.run(|_| Ok(())).unwrap();
    let cs = sim.state.clusters.as_ref().unwrap();
    assert_eq!(cs.m, 3);
    assert!(cs.epsilon.is_none());
    assert!(same_groups(&cs.assignment, &fed.ground_truth()));
}

#[test]
fn partial_participation_attaches_late_joiners() {
    let mut cfg = config(Mode::Flux);
    // small cohorts can miss a distribution entirely; 0.75 keeps the fixture meaningful
    cfg.participation_rate = 0.75;
    cfg.rounds = 12;
    let fed = data(&cfg);
    let mut sim = Simulation::new(&cfg, &fed).unwrap();
    let logs = sim.run(|_| Ok(())).unwrap();
    assert!(logs.iter().any(|l| l.participants.len() < fed.train.len()));
    let truth = fed.ground_truth();
    let assigned: Vec<(usize, usize)> = sim
        .state
        .client_cluster
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.map(|c| (truth[k], c)))
        .collect();
    assert!(assigned.len() > sim.state.clustered_clients.len(), "no late joiner was seen");
    // clusters stay pure: one distribution per cluster
    for &(d, c) in &assigned {
        for &(d2, c2) in &assigned {
            if c == c2 {
                assert_eq!(d, d2);
            }
        }
    }
}

#[test]
fn rerun_is_bit_identical_across_thread_counts() {
    let mut cfg = config(Mode::Flux);
    cfg.participation_rate = 0.8;
    let fed = data(&cfg);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut sim = Simulation::new(&cfg, &fed).unwrap();
            let logs = sim.run(|_| Ok(())).unwrap();
            (logs, sim.into_state())
        })
    };
    let (l1, s1) = run(1);
    let (l3, s3) = run(3);
    assert_eq!(l1, l3);
    assert_eq!(s1.models, s3.models);
    assert_eq!(s1.clusters, s3.clusters);
}

#[test]
fn inference_needs_clusters() {
    let cfg = config(Mode::Flux);
    let fed = data(&cfg);
    let sim = Simulation::new(&cfg, &fed).unwrap();
    let err = infer_test_clients(&sim.state, &cfg, &fed.test).unwrap_err();
    assert!(matches!(err, FluxError::InferenceBeforeTraining));

    let fedavg_cfg = config(Mode::FedAvg);
    let sim = Simulation::new(&fedavg_cfg, &fed).unwrap();
    let out = infer_test_clients(&sim.state, &fedavg_cfg, &fed.test).unwrap();
    assert!(out.iter().all(|o| o.cluster == 0));
    let known = evaluate_known_association(&sim.state, &fed.ground_truth(), &fed.test).unwrap();
    assert_eq!(out, known);
}

fn split_state(client_cluster: Vec<Option<usize>>, models: usize) -> FederationState {
    let small = ExperimentConfig {
        dim: 4,
        hidden: 4,
        reduced_dim: 2,
        samples_per_client: 20,
        classes: 2,
        level: 1,
        num_distributions: 2,
        clients: client_cluster.len(),
        ..config(Mode::Flux)
    };
    let mut state = Simulation::new(&small, &data(&small)).unwrap().into_state();
    state.models = vec![state.models[0].clone(); models];
    state.client_cluster = client_cluster;
    state
}

#[test]
fn majority_rule_decides_split_distributions() {
    // distribution 0: clients 0,1,2 -> clusters 1,1,0; distribution 1: clients 3,4 -> 0,2
    let state = split_state(vec![Some(1), Some(1), Some(0), Some(0), Some(2)], 3);
    let owner = majority_clusters(&state, &[0, 0, 0, 1, 1], 2);
    assert_eq!(owner, vec![1, 0]);
    // a distribution with no assigned client falls back to cluster 0
    let state = split_state(vec![Some(1), None, None, None], 2);
    assert_eq!(majority_clusters(&state, &[0, 0, 1, 1], 2), vec![1, 0]);
}

#[test]
fn invalid_config_rejected_before_training() {
    let mut cfg = config(Mode::Flux);
    let fed = data(&cfg);
    cfg.participation_rate = 1.5;
    assert!(matches!(Simulation::new(&cfg, &fed), Err(FluxError::Config(_))));
    let mut cfg = config(Mode::Flux);
    cfg.dim = 10;
    assert!(Simulation::new(&cfg, &fed).is_err());
}
