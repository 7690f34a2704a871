use fluxfed::clustering::{canonical_relabel, dbscan_adaptive, kmeans_prior};
use fluxfed::descriptor::{
    extract_descriptor, fit_shared_pca, laplace_scales, AlignmentBounds, DescriptorLayout, DescriptorVector, DpParams,
};
use fluxfed::gaussmetric::{w2_gaussian_diag, GaussianSummary};
use fluxfed::numcore::{softmax, weighted_param_mean, Matrix, ParamVector, RngStream};
use proptest::prelude::*;

fn as_descriptors(points: &[Vec<f64>]) -> Vec<DescriptorVector<f64>> {
    let layout = DescriptorLayout {
        l: points[0].len(),
        classes: 0,
        with_sigma: false,
        with_class_blocks: false,
    };
    points
        .iter()
        .map(|p| DescriptorVector {
            values: p.clone(),
            layout,
            sample_count: 1,
            dp_epsilon: None,
        })
        .collect()
}

fn points_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|dim| prop::collection::vec(prop::collection::vec(-20.0f64..20.0, dim), 3..20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_is_a_canonical_partition(points in points_strategy(), scale in 0.2f64..2.0) {
        let state = dbscan_adaptive(&as_descriptors(&points), scale).unwrap();
        prop_assert_eq!(state.assignment.len(), points.len());
        prop_assert_eq!(canonical_relabel(&state.assignment), state.assignment.clone());
        prop_assert!(state.sizes().iter().all(|&s| s > 0));
        prop_assert_eq!(state.centroids.len(), state.m);
    }

    #[test]
    fn dbscan_ignores_input_order(points in points_strategy(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..points.len()).collect();
        RngStream::new(seed).shuffle(&mut order);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let a = dbscan_adaptive(&as_descriptors(&points), 1.0).unwrap();
        let b = dbscan_adaptive(&as_descriptors(&shuffled), 1.0).unwrap();
        prop_assert_eq!(a.m, b.m);
        for i in 0..order.len() {
            for j in 0..order.len() {
                prop_assert_eq!(
                    a.assignment[order[i]] == a.assignment[order[j]],
                    b.assignment[i] == b.assignment[j]
                );
            }
        }
    }

    #[test]
    fn kmeans_fills_every_cluster(points in points_strategy(), m in 1usize..4, seed in any::<u64>()) {
        let m = m.min(points.len());
        let report = kmeans_prior(&as_descriptors(&points), m, seed, 50).unwrap();
        prop_assert_eq!(report.state.m, m);
        prop_assert!(report.state.sizes().iter().all(|&s| s > 0));
        prop_assert!(report.inertia.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn weighted_mean_permutation_invariant(
        vecs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..8),
        weights in prop::collection::vec(1.0f64..100.0, 8),
        seed in any::<u64>(),
    ) {
        let ps: Vec<ParamVector<f64>> = vecs.iter().cloned().map(ParamVector).collect();
        let w = &weights[..ps.len()];
        let refs: Vec<&ParamVector<f64>> = ps.iter().collect();
        let base = weighted_param_mean(&refs, w).unwrap();
        let mut order: Vec<usize> = (0..ps.len()).collect();
        RngStream::new(seed).shuffle(&mut order);
        let prefs: Vec<&ParamVector<f64>> = order.iter().map(|&i| &ps[i]).collect();
        let pw: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        let permuted = weighted_param_mean(&prefs, &pw).unwrap();
        for (a, b) in base.0.iter().zip(&permuted.0) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // convex combination stays within the per-coordinate hull
        for j in 0..6 {
            let lo = vecs.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
            let hi = vecs.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(base.0[j] >= lo - 1e-12 && base.0[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn weighted_mean_idempotent(v in prop::collection::vec(-5.0f64..5.0, 5), n in 1usize..6) {
        let p = ParamVector(v.clone());
        let refs = vec![&p; n];
        let w: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        prop_assert_eq!(weighted_param_mean(&refs, &w).unwrap().0, v);
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..6)) {
        let p = softmax(&Matrix::from_rows(&rows).unwrap());
        for r in p.row_iter() {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn w2_is_a_metric() {
    let mut rng = RngStream::new(11);
    let mut gauss = |dim: usize| {
        let mean = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let sigma = (0..dim).map(|_| rng.uniform(0.0, 2.0)).collect();
        GaussianSummary::new(mean, sigma).unwrap()
    };
    for _ in 0..10_000 {
        let (a, b, c) = (gauss(4), gauss(4), gauss(4));
        let ab = w2_gaussian_diag(&a, &b).unwrap();
        let ba = w2_gaussian_diag(&b, &a).unwrap();
        let bc = w2_gaussian_diag(&b, &c).unwrap();
        let ac = w2_gaussian_diag(&a, &c).unwrap();
        assert!(ab >= 0.0);
        assert_eq!(ab, ba);
        assert_eq!(w2_gaussian_diag(&a, &a).unwrap(), 0.0);
        assert!(ac <= ab + bc + 1e-10);
    }
}

fn unit_space(l: usize, v: usize) -> (AlignmentBounds<f64>, fluxfed::descriptor::PcaMap<f64>) {
    let bounds = AlignmentBounds::new(vec![0.0; v], vec![1.0; v]).unwrap();
    let pca = fit_shared_pca(&bounds, 200, l, 5).unwrap();
    (bounds, pca)
}

fn latents(rng: &mut RngStream, s: usize, v: usize) -> Matrix<f64> {
    Matrix::new(s, v, (0..s * v).map(|_| rng.next_f64()).collect()).unwrap()
}

#[test]
fn labeled_prefix_equals_label_free_descriptor() {
    let (_, pca) = unit_space(3, 6);
    let layout = DescriptorLayout::new(3, 4);
    let mut rng = RngStream::new(2);
    for _ in 0..50 {
        let x = latents(&mut rng, 20, 6);
        let y: Vec<usize> = (0..20).map(|_| rng.next_below(4)).collect();
        let full = extract_descriptor(&x, Some(&y), &layout, &pca, None, &mut RngStream::new(0)).unwrap();
        let free = extract_descriptor(&x, None, &layout, &pca, None, &mut RngStream::new(0)).unwrap();
        assert_eq!(full.label_free(), free.label_free());
        assert!(free.values[layout.prefix_len()..].iter().all(|&v| v == 0.0));
        let again = extract_descriptor(&x, Some(&y), &layout, &pca, None, &mut RngStream::new(9)).unwrap();
        assert_eq!(full.values, again.values);
        assert_eq!(full.len(), 2 * (4 + 1) * 3);
    }
}

#[test]
fn dp_noise_vanishes_at_large_epsilon() {
    let (bounds, pca) = unit_space(3, 6);
    let layout = DescriptorLayout::new(3, 2);
    let mut rng = RngStream::new(4);
    let x = latents(&mut rng, 30, 6);
    let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
    let clean = extract_descriptor(&x, Some(&y), &layout, &pca, None, &mut rng).unwrap();
    let eps = 1e6;
    let scales = laplace_scales(&pca, &layout, &bounds, 30, eps).unwrap();
    let mut exceed = 0usize;
    let mut total = 0usize;
    for draw in 0..10_000u64 {
        let dp = DpParams { epsilon: eps, bounds: &bounds };
        let noisy = extract_descriptor(&x, Some(&y), &layout, &pca, Some(dp), &mut RngStream::new(draw)).unwrap();
        for (i, (n, c)) in noisy.values.iter().zip(&clean.values).enumerate() {
            total += 1;
            // Range_k / (s eps) is the scale of mean coordinate k
            let k = (i % layout.block_len()) % layout.l;
            if (n - c).abs() >= 10.0 * scales[k] {
                exceed += 1;
            }
        }
    }
    assert!((exceed as f64) / (total as f64) <= 1e-3, "{exceed} of {total}");
}

#[test]
fn laplace_scales_follow_sensitivity() {
    let (bounds, pca) = unit_space(2, 4);
    let layout = DescriptorLayout::new(2, 3);
    let b = laplace_scales(&pca, &layout, &bounds, 50, 2.0).unwrap();
    assert_eq!(b.len(), layout.len());
    for k in 0..2 {
        let range = pca.projected_range(k, &bounds);
        assert!((b[k] - range / 100.0).abs() < 1e-15);
        assert!((b[2 + k] - range / 200.0).abs() < 1e-15);
        // every block repeats the marginal scales
        assert_eq!(b[4 + k], b[k]);
    }
}

#[test]
fn laplace_sampler_moments() {
    let n = 100_000;
    for b in [0.5, 3.0] {
        let mut rng = RngStream::new(77);
        let draws: Vec<f64> = (0..n).map(|_| rng.next_laplace(b)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let mad = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * b / (n as f64).sqrt(), "mean {mean}");
        assert!((mad - b).abs() <= 0.05 * b, "mad {mad}");
    }
}

#[test]
fn full_rank_projection_is_an_isometry() {
    let v = 5;
    let (_, pca) = unit_space(v, v);
    let mut rng = RngStream::new(8);
    let x = latents(&mut rng, 12, v);
    let z = pca.project(&x).unwrap();
    let d = |m: &Matrix<f64>, i: usize, j: usize| {
        m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    for i in 0..12 {
        for j in 0..12 {
            assert!((d(&x, i, j) - d(&z, i, j)).abs() < 1e-9);
        }
    }
}
