//! End-to-end sanity of the baseline stack: CV-tuned random forest on a
//! separable synthetic set, plus the closed-form and gradient contracts.

use forest_baselines::{
    fit, logistic_loss_and_grad, predict_region, tune_cv, BaselineKind, BaselineVariant,
    HyperGrid, Hyperparams, RidgeModel,
};
use forest_core::DriverClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four well-separated Gaussian-ish blobs in 6 dimensions; one row per
/// event.
fn blobs(n_events: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<DriverClass>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: [[f64; 6]; 4] = [
        [0.0, 0.0, 0.0, 1.0, -1.0, 0.5],
        [6.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        [0.0, 6.0, -1.0, 0.0, 1.0, -0.5],
        [6.0, 6.0, 0.5, 0.5, -0.5, 1.0],
    ];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for e in 0..n_events {
        let c = e % 4;
        let row: Vec<f64> = centers[c]
            .iter()
            .map(|&v| v + rng.gen_range(-0.5..0.5))
            .collect();
        rows.push(row);
        labels.push(DriverClass::from_index(c).unwrap());
        ids.push(format!("ev{e:04}"));
    }
    (rows, labels, ids)
}

#[test]
fn cv_tuned_forest_reaches_high_heldout_accuracy() {
    let (rows, labels, ids) = blobs(240, 11);
    let (hold_rows, hold_labels, _) = blobs(80, 99);

    let grid = HyperGrid {
        max_depth: vec![Some(8), None],
        min_samples_leaf: vec![1],
        n_trees: vec![100],
        ..HyperGrid::default()
    };
    let outcome = tune_cv(
        BaselineKind::RandomForest,
        BaselineVariant::Region,
        &rows,
        &labels,
        &ids,
        &grid,
        21,
    )
    .unwrap();
    let model = fit(BaselineKind::RandomForest, &rows, &labels, &outcome.best, 21).unwrap();
    let correct = hold_rows
        .iter()
        .zip(&hold_labels)
        .filter(|(r, &l)| {
            predict_region(&model, BaselineVariant::Region, &[(*r).clone()]).unwrap() == l
        })
        .count();
    let acc = correct as f64 / hold_rows.len() as f64;
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn knn_k1_training_accuracy_is_one() {
    let (rows, labels, _) = blobs(100, 5);
    let model = fit(
        BaselineKind::KNearestNeighbor,
        &rows,
        &labels,
        &Hyperparams::Knn { k: 1 },
        0,
    )
    .unwrap();
    for (row, &label) in rows.iter().zip(&labels) {
        assert_eq!(model.predict_row(row), label);
    }
}

#[test]
fn ridge_normal_equations_hold_on_random_data() {
    let (rows, labels, _) = blobs(120, 8);
    let model = RidgeModel::fit(&rows, &labels, 0.5).unwrap();
    assert!(model.normal_equation_residual(&rows, &labels) <= 1e-8);
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let (rows, labels, _) = blobs(24, 3);
    let d = rows[0].len();
    let mut weights = vec![0.0; 4 * (d + 1)];
    for (i, w) in weights.iter_mut().enumerate() {
        *w = ((i * 31 % 17) as f64 - 8.0) * 0.03;
    }
    let (_, grad) = logistic_loss_and_grad(&weights, &rows, &labels, 0.1);
    let h = 1e-6;
    for i in 0..weights.len() {
        let mut wp = weights.clone();
        wp[i] += h;
        let mut wm = weights.clone();
        wm[i] -= h;
        let (lp, _) = logistic_loss_and_grad(&wp, &rows, &labels, 0.1);
        let (lm, _) = logistic_loss_and_grad(&wm, &rows, &labels, 0.1);
        let numeric = (lp - lm) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
        assert!(rel <= 1e-5, "param {i}: rel error {rel}");
    }
}

#[test]
fn pixel_variant_mode_prediction_over_event_rows() {
    let (rows, labels, _) = blobs(40, 14);
    let model = fit(
        BaselineKind::KNearestNeighbor,
        &rows,
        &labels,
        &Hyperparams::Knn { k: 1 },
        0,
    )
    .unwrap();
    // an "event" whose pixels mostly look like class 2
    let event_rows = vec![rows[2].clone(), rows[2].clone(), rows[1].clone()];
    let pred = predict_region(&model, BaselineVariant::Pixel, &event_rows).unwrap();
    assert_eq!(pred, labels[2]);
}
