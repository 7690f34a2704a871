use fluxfed::datagen::{gen_synthetic_federation, ShiftType};
use fluxfed::descriptor::{descriptor_distance, extract_descriptor};
use fluxfed::federation::{ExperimentConfig, Simulation};
use fluxfed::gaussmetric::reference;
use fluxfed::numcore::{Matrix, Mlp};
use fluxfed::RngStream;

fn mean_and_covariance(x: &Matrix<f64>) -> (Vec<f64>, Matrix<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for row in x.row_iter() {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]) / n as f64;
            }
        }
    }
    (mean, cov)
}

/// Ranks starting at 1, ties share their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[test]
fn spearman_handles_ties() {
    assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 300.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
}

/// The label-free descriptor distance should order client pairs like the
/// exact Gaussian W2 between their projected latent marginals.
#[test]
fn label_free_distance_tracks_full_covariance_w2() {
    let config = ExperimentConfig::with_shift(ShiftType::FeatureShift);
    let fed = gen_synthetic_federation(&config.synthetic(), &config.shift(), config.seed).unwrap();
    let mut sim = Simulation::new(&config, &fed).unwrap();
    sim.run(|_| Ok(())).unwrap();
    let state = sim.into_state();
    let space = state.space.as_ref().expect("clustered");
    let model = Mlp::from_params(state.shape, state.global.clone()).unwrap();

    let mut descriptors = Vec::new();
    let mut moments = Vec::new();
    for c in &fed.train {
        let latents = model.latents(&c.train_features()).unwrap();
        let d = extract_descriptor(&latents, None, &space.layout, &space.pca, None, &mut RngStream::new(0)).unwrap();
        descriptors.push(d);
        moments.push(mean_and_covariance(&space.pca.project(&latents).unwrap()));
    }

    let (mut ours, mut exact) = (Vec::new(), Vec::new());
    for i in 0..fed.train.len() {
        for j in i + 1..fed.train.len() {
            ours.push(descriptor_distance(&descriptors[i], &descriptors[j], true).unwrap());
            let (mi, si) = &moments[i];
            let (mj, sj) = &moments[j];
            exact.push(reference::w2_squared(mi, si, mj, sj).unwrap().sqrt());
        }
    }
    assert_eq!(ours.len(), 66);
    let rho = spearman(&ours, &exact);
    println!("spearman rho = {rho:.4}");
    assert!(rho >= 0.9, "rho {rho}");
}
