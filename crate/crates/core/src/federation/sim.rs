use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_nearest_centroid, dbscan_adaptive, kmeans_prior, ClusterState};
use crate::datagen::{ClientDataset, Federation};
use crate::descriptor::{
    extract_descriptor, fit_shared_pca, local_bounds, merge_bounds, AlignmentBounds, DescriptorLayout,
    DescriptorVector, DpParams, PcaMap, PCA_REFERENCE_POINTS,
};
use crate::error::{FluxError, Result};
use crate::federation::config::{ExperimentConfig, Mode};
use crate::federation::trigger::should_trigger;
use crate::numcore::{weighted_param_mean, Matrix, Mlp, MlpShape, ParamVector, RngStream};

// stream tags
pub(crate) const TAG_INIT: u64 = 101;
pub(crate) const TAG_PARTICIPATION: u64 = 102;
pub(crate) const TAG_TRAIN: u64 = 103;
pub(crate) const TAG_PCA: u64 = 104;
pub(crate) const TAG_DP: u64 = 105;
pub(crate) const TAG_KMEANS: u64 = 106;
pub(crate) const TAG_DP_TEST: u64 = 107;

/// Shared latent frame fixed at clustering time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSpace {
    pub layout: DescriptorLayout,
    pub bounds: AlignmentBounds<f64>,
    pub pca: PcaMap<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationState {
    /// Completed rounds.
    pub round: usize,
    pub mode: Mode,
    pub shape: MlpShape,
    /// The global model; frozen once clustering starts and used as the
    /// reference for every later descriptor.
    pub global: ParamVector<f64>,
    /// One model before clustering, one per cluster after.
    pub models: Vec<ParamVector<f64>>,
    pub clusters: Option<ClusterState<f64>>,
    /// Client ids in the order of `clusters.assignment`.
    pub clustered_clients: Vec<usize>,
    pub client_cluster: Vec<Option<usize>>,
    #[serde(skip)]
    pub client_params: Vec<Option<ParamVector<f64>>>,
    pub sample_counts: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub trigger_round: Option<usize>,
    pub space: Option<DescriptorSpace>,
}

impl FederationState {
    pub fn triggered(&self) -> bool {
        self.trigger_round.is_some()
    }

    /// Model serving client `k` (cluster 0 before clustering or when the
    /// client is unassigned).
    fn model_index(&self, k: usize) -> usize {
        self.client_cluster[k].unwrap_or(0)
    }

    pub fn descriptor_len(&self, config: &ExperimentConfig) -> usize {
        layout_for(config).len()
    }
}

/// Per-round record written to the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub participants: Vec<usize>,
    /// Clients assigned to each cluster (all clients before clustering).
    pub cluster_sizes: Vec<usize>,
    pub accuracy: f64,
    /// Clustering ran in this round.
    pub triggered: bool,
    pub epsilon: Option<f64>,
    pub m: usize,
    pub descriptor_len: usize,
    pub param_count: usize,
    pub descriptor_ratio: f64,
}

struct Split {
    train_x: Matrix<f64>,
    train_y: Vec<usize>,
    val_x: Matrix<f64>,
    val_y: Vec<usize>,
}

pub(crate) fn layout_for(config: &ExperimentConfig) -> DescriptorLayout {
    DescriptorLayout {
        with_sigma: config.descriptor_sigma,
        with_class_blocks: config.descriptor_class_blocks,
        ..DescriptorLayout::new(config.reduced_dim, config.classes)
    }
}

/// Round loop over one federation.
pub struct Simulation<'a> {
    config: &'a ExperimentConfig,
    clients: Vec<Split>,
    pub state: FederationState,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ExperimentConfig, federation: &Federation) -> Result<Self> {
        config.validate()?;
        let shape = config.model_shape();
        if federation.dim != shape.input || federation.classes != shape.classes {
            return Err(FluxError::config(format!(
                "data has dim {} / {} classes, config expects {} / {}",
                federation.dim, federation.classes, shape.input, shape.classes
            )));
        }
        if federation.train.is_empty() {
            return Err(FluxError::precondition("federation has no training clients"));
        }
        let clients: Vec<Split> = federation
            .train
            .iter()
            .map(|c| Split {
                train_x: c.train_features(),
                train_y: c.train_labels().to_vec(),
                val_x: c.val_features(),
                val_y: c.val_labels().to_vec(),
            })
            .collect();
        let init = Mlp::<f64>::init(shape, &mut RngStream::derive(config.seed, &[TAG_INIT]));
        let k = clients.len();
        let state = FederationState {
            round: 0,
            mode: config.mode,
            shape,
            global: init.params().clone(),
            models: vec![init.into_params()],
            clusters: None,
            clustered_clients: Vec::new(),
            client_cluster: vec![None; k],
            client_params: vec![None; k],
            sample_counts: clients.iter().map(|c| c.train_y.len()).collect(),
            accuracy: Vec::new(),
            trigger_round: None,
            space: None,
        };
        Ok(Self {
            config,
            clients,
            state,
        })
    }

    fn participants(&self, round: usize) -> Vec<usize> {
        let k = self.clients.len();
        let rate = self.config.participation_rate;
        if rate >= 1.0 {
            return (0..k).collect();
        }
        let mut rng = RngStream::derive(self.config.seed, &[TAG_PARTICIPATION, round as u64]);
        let draws: Vec<f64> = (0..k).map(|_| rng.next_f64()).collect();
        let chosen: Vec<usize> = (0..k).filter(|&i| draws[i] < rate).collect();
        if chosen.is_empty() {
            // an empty round would stall the schedule; take the lowest draw
            let best = (0..k)
                .min_by(|&a, &b| draws[a].total_cmp(&draws[b]))
                .expect("at least one client");
            return vec![best];
        }
        chosen
    }

    fn descriptor_for(&self, k: usize, space: &DescriptorSpace, reference: &Mlp<f64>) -> Result<DescriptorVector<f64>> {
        let c = &self.clients[k];
        let latents = reference.latents(&c.train_x)?;
        let dp = self.config.dp_epsilon.map(|epsilon| DpParams {
            epsilon,
            bounds: &space.bounds,
        });
        let mut rng = RngStream::derive(self.config.seed, &[TAG_DP, k as u64]);
        extract_descriptor(&latents, Some(&c.train_y), &space.layout, &space.pca, dp, &mut rng)
    }

    /// Builds the shared frame from the cohort's latent bounds, collects
    /// descriptors and clusters them.
    fn cluster(&mut self, cohort: &[usize], round: usize) -> Result<()> {
        let reference = Mlp::from_params(self.state.shape, self.state.models[0].clone())?;
        let bounds_parts = cohort
            .par_iter()
            .map(|&k| local_bounds(&reference.latents(&self.clients[k].train_x)?))
            .collect::<Result<Vec<_>>>()?;
        let bounds = merge_bounds(&bounds_parts)?;
        let pca_seed = RngStream::derive(self.config.seed, &[TAG_PCA]).next_u64();
        let pca = fit_shared_pca(&bounds, PCA_REFERENCE_POINTS, self.config.reduced_dim, pca_seed)?;
        let space = DescriptorSpace {
            layout: layout_for(self.config),
            bounds,
            pca,
        };
        let descriptors = cohort
            .par_iter()
            .map(|&k| self.descriptor_for(k, &space, &reference))
            .collect::<Result<Vec<_>>>()?;

        let clusters = match self.config.mode {
            Mode::Flux => dbscan_adaptive(&descriptors, self.config.dbscan_scale)?,
            Mode::FluxPrior => {
                let m = self.config.num_distributions.min(descriptors.len());
                let seed = RngStream::derive(self.config.seed, &[TAG_KMEANS]).next_u64();
                kmeans_prior(&descriptors, m, seed, self.config.kmeans_max_iter)?.state
            }
            Mode::FedAvg => unreachable!("fedavg never clusters"),
        };
        log::info!(
            "round {round}: clustered {} clients into {} groups",
            cohort.len(),
            clusters.m
        );
        for (&k, &c) in cohort.iter().zip(&clusters.assignment) {
            self.state.client_cluster[k] = Some(c);
        }
        self.state.global = self.state.models[0].clone();
        self.state.models = vec![self.state.global.clone(); clusters.m];
        self.state.clustered_clients = cohort.to_vec();
        self.state.clusters = Some(clusters);
        self.state.space = Some(space);
        self.state.trigger_round = Some(round);
        Ok(())
    }

    /// Attaches participants never seen before by their full descriptor.
    fn assign_late_joiners(&mut self, participants: &[usize]) -> Result<()> {
        let fresh: Vec<usize> = participants
            .iter()
            .copied()
            .filter(|&k| self.state.client_cluster[k].is_none())
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        let (Some(space), Some(clusters)) = (&self.state.space, &self.state.clusters) else {
            return Err(FluxError::precondition("late-joiner assignment before clustering"));
        };
        let reference = Mlp::from_params(self.state.shape, self.state.global.clone())?;
        let assigned = fresh
            .par_iter()
            .map(|&k| {
                let d = self.descriptor_for(k, space, &reference)?;
                assign_nearest_centroid(&d.values, &clusters.full_centroids)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, c) in fresh.into_iter().zip(assigned) {
            log::debug!("late joiner {k} -> cluster {c}");
            self.state.client_cluster[k] = Some(c);
        }
        Ok(())
    }

    pub fn run_round(&mut self) -> Result<RoundLog> {
        let round = self.state.round + 1;
        let participants = self.participants(round);
        let mut triggered_now = false;

        if self.config.mode.clusters()
            && !self.state.triggered()
            && should_trigger(
                &self.state.accuracy,
                round - 1,
                self.config.rounds,
                self.config.trigger_threshold,
            )
        {
            self.cluster(&participants, round)?;
            triggered_now = true;
        } else if self.state.triggered() {
            self.assign_late_joiners(&participants)?;
        }

        let shape = self.state.shape;
        let sgd = self.config.sgd();
        let seed = self.config.seed;
        let trained = participants
            .par_iter()
            .map(|&k| {
                let start = Mlp::from_params(shape, self.state.models[self.state.model_index(k)].clone())?;
                let mut rng = RngStream::derive(seed, &[TAG_TRAIN, k as u64, round as u64]);
                let c = &self.clients[k];
                Ok(start.train_local(&c.train_x, &c.train_y, &sgd, &mut rng)?.into_params())
            })
            .collect::<Result<Vec<_>>>()?;

        for m in 0..self.state.models.len() {
            let (params, weights): (Vec<&ParamVector<f64>>, Vec<f64>) = participants
                .iter()
                .zip(&trained)
                .filter(|(&k, _)| self.state.model_index(k) == m)
                .map(|(&k, p)| (p, self.state.sample_counts[k] as f64))
                .unzip();
            if !params.is_empty() {
                self.state.models[m] = weighted_param_mean(&params, &weights)?;
            }
        }
        if !self.state.triggered() {
            self.state.global = self.state.models[0].clone();
        }
        for (&k, p) in participants.iter().zip(trained) {
            self.state.client_params[k] = Some(p);
        }

        let scored = participants
            .par_iter()
            .map(|&k| {
                let model = Mlp::from_params(shape, self.state.models[self.state.model_index(k)].clone())?;
                let c = &self.clients[k];
                Ok((model.accuracy(&c.val_x, &c.val_y)?, c.val_y.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        let total: usize = scored.iter().map(|s| s.1).sum();
        let accuracy = scored.iter().map(|(a, n)| a * *n as f64).sum::<f64>() / total as f64;
        self.state.accuracy.push(accuracy);
        self.state.round = round;

        let cluster_sizes = match &self.state.clusters {
            Some(cs) => {
                let mut sizes = vec![0; cs.m];
                for c in self.state.client_cluster.iter().flatten() {
                    sizes[*c] += 1;
                }
                sizes
            }
            None => vec![self.clients.len()],
        };
        let descriptor_len = layout_for(self.config).len();
        let param_count = shape.param_count();
        Ok(RoundLog {
            round,
            participants,
            cluster_sizes,
            accuracy,
            triggered: triggered_now,
            epsilon: self.state.clusters.as_ref().and_then(|c| c.epsilon),
            m: self.state.models.len(),
            descriptor_len,
            param_count,
            descriptor_ratio: descriptor_len as f64 / param_count as f64,
        })
    }

    /// Runs all configured rounds, passing each log entry to `sink`.
    pub fn run(&mut self, mut sink: impl FnMut(&RoundLog) -> Result<()>) -> Result<Vec<RoundLog>> {
        let mut logs = Vec::with_capacity(self.config.rounds);
        while self.state.round < self.config.rounds {
            let entry = self.run_round()?;
            log::info!(
                "round {}: accuracy {:.4}, models {}",
                entry.round,
                entry.accuracy,
                entry.m
            );
            sink(&entry)?;
            logs.push(entry);
        }
        Ok(logs)
    }

    pub fn into_state(self) -> FederationState {
        self.state
    }
}

/// Result of scoring one test client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub client_id: usize,
    pub cluster: usize,
    pub accuracy: f64,
    pub samples: usize,
}

/// Sample-weighted mean accuracy.
pub fn mean_accuracy(outcomes: &[TestOutcome]) -> f64 {
    let n: usize = outcomes.iter().map(|o| o.samples).sum();
    if n == 0 {
        return 0.0;
    }
    outcomes.iter().map(|o| o.accuracy * o.samples as f64).sum::<f64>() / n as f64
}

fn score(state: &FederationState, client: &ClientDataset, cluster: usize) -> Result<TestOutcome> {
    let model = Mlp::from_params(state.shape, state.models[cluster].clone())?;
    Ok(TestOutcome {
        client_id: client.client_id,
        cluster,
        accuracy: model.accuracy(&client.features, &client.labels)?,
        samples: client.len(),
    })
}

/// Routes unseen clients by their label-free descriptor (computed with the
/// frozen reference model) and scores each with its cluster's model.
/// Labels are used only for scoring.
pub fn infer_test_clients(
    state: &FederationState,
    config: &ExperimentConfig,
    test: &[ClientDataset],
) -> Result<Vec<TestOutcome>> {
    if !state.mode.clusters() {
        return test.par_iter().map(|c| score(state, c, 0)).collect();
    }
    let (Some(space), Some(clusters)) = (&state.space, &state.clusters) else {
        return Err(FluxError::InferenceBeforeTraining);
    };
    let reference = Mlp::from_params(state.shape, state.global.clone())?;
    test.par_iter()
        .enumerate()
        .map(|(q, c)| {
            let latents = reference.latents(&c.features)?;
            let dp = config.dp_epsilon.map(|epsilon| DpParams {
                epsilon,
                bounds: &space.bounds,
            });
            let mut rng = RngStream::derive(config.seed, &[TAG_DP_TEST, q as u64]);
            let d = extract_descriptor(&latents, None, &space.layout, &space.pca, dp, &mut rng)?;
            let cluster = assign_nearest_centroid(d.label_free(), &clusters.centroids)?;
            score(state, c, cluster)
        })
        .collect()
}

/// Cluster holding most training clients of each distribution (lowest id
/// on ties, cluster 0 when no client of the distribution was assigned).
pub fn majority_clusters(state: &FederationState, train_truth: &[usize], distributions: usize) -> Vec<usize> {
    let m = state.models.len();
    let mut counts = vec![vec![0usize; m]; distributions];
    for (k, &d) in train_truth.iter().enumerate() {
        if let (Some(Some(c)), true) = (state.client_cluster.get(k), d < distributions) {
            counts[d][*c] += 1;
        }
    }
    counts
        .iter()
        .map(|row| {
            let best = row.iter().copied().max().unwrap_or(0);
            row.iter().position(|&v| v == best).unwrap_or(0)
        })
        .collect()
}

/// Scores each test client with the model of the cluster that holds the
/// majority of its distribution's training clients.
pub fn evaluate_known_association(
    state: &FederationState,
    train_truth: &[usize],
    test: &[ClientDataset],
) -> Result<Vec<TestOutcome>> {
    let distributions = train_truth
        .iter()
        .chain(test.iter().map(|c| &c.distribution_id))
        .max()
        .map_or(0, |d| d + 1);
    let owner = majority_clusters(state, train_truth, distributions);
    test.par_iter()
        .map(|c| {
            let cluster = if state.mode.clusters() {
                owner[c.distribution_id]
            } else {
                0
            };
            score(state, c, cluster)
        })
        .collect()
}
