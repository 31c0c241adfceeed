use qfm::flow::{
    gradient_check, load_field, make_path_sample, oracle_field, qfm_loss, Checkpoint, MlpField,
    OracleField, VectorField,
};
use qfm::image::Image;
use qfm::Dims;

fn ramp(n: usize) -> Image {
    Image::from_fn(n, n, |r, c| 0.2 + 0.6 * (r + c) as f64 / (2 * n) as f64).unwrap()
}

#[test]
fn zero_field_loss_is_sigma_max_squared() {
    // target is sigma_max * eps, so E[loss] = sigma_max^2 with sd ~ sigma_max^2 sqrt(2 / N)
    let sigma_max = 1.5;
    let x0 = ramp(16);
    let batch: Vec<_> = (0..200)
        .map(|s| make_path_sample(&x0, 0.3, sigma_max, (s % 10) as f64 / 10.0, s).unwrap())
        .collect();
    let zero = OracleField::constant(Image::filled(16, 16, 0.0).unwrap());
    let loss = qfm_loss(&zero, &batch).unwrap();
    let sd = sigma_max * sigma_max * (2.0 / (200.0 * 256.0f64)).sqrt();
    assert!((loss - sigma_max * sigma_max).abs() < 5.0 * sd, "{loss}");
}

#[test]
fn loss_is_permutation_invariant() {
    let field = MlpField::new(Dims(4, 4), &[7], 1.0, 2).unwrap();
    let batch: Vec<_> = (0..6)
        .map(|s| make_path_sample(&ramp(4), 0.5, 1.0, 0.1 * s as f64, s).unwrap())
        .collect();
    let mut rev = batch.clone();
    rev.reverse();
    let a = qfm_loss(&field, &batch).unwrap();
    let b = qfm_loss(&field, &rev).unwrap();
    assert!((a - b).abs() <= 1e-15 * a);
}

#[test]
fn perfect_field_has_zero_loss() {
    let x0 = ramp(5);
    let sample = make_path_sample(&x0, 0.25, 1.0, 0.4, 11).unwrap();
    let x1 = sample.x1.clone();
    let field = oracle_field(&x0, &x1, 0.25, 1.0).unwrap();
    assert_eq!(qfm_loss(&field, &[sample]).unwrap(), 0.0);
}

#[test]
fn all_zero_weights_gradients_agree() {
    let field = MlpField::zeros(Dims(4, 4), &[6, 6], 1.0).unwrap();
    let sample = make_path_sample(&ramp(4), 0.6, 1.0, 0.7, 3).unwrap();
    let check = gradient_check(&field, &sample, 1e-5, 1).unwrap();
    assert!(check.checked >= 100);
    assert!(check.max_absolute_error < 1e-6, "{check:?}");
}

#[test]
fn gradient_check_deep_and_shallow() {
    for (hidden, seed) in [(vec![], 1u64), (vec![16], 2), (vec![12, 10, 8], 3)] {
        let field = MlpField::new(Dims(4, 4), &hidden, 1.0, seed).unwrap();
        let sample = make_path_sample(&ramp(4), 0.3, 1.0, 0.5, seed).unwrap();
        let check = gradient_check(&field, &sample, 1e-5, seed).unwrap();
        assert!(check.max_relative_error < 1e-4, "{hidden:?}: {check:?}");
    }
}

#[test]
fn checkpoint_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.json");
    let field = MlpField::new(Dims(3, 3), &[5], 0.9, 4).unwrap();
    Checkpoint::from_mlp(&field).save(&path).unwrap();
    let (loaded, sigma_max) = load_field(&path).unwrap();
    assert_eq!(sigma_max, 0.9);
    assert_eq!(loaded.resolution(), Dims(3, 3));
    let x = ramp(3);
    assert_eq!(
        loaded.evaluate(&x, 0.2, 0.4).unwrap(),
        field.evaluate(&x, 0.2, 0.4).unwrap()
    );
}

#[test]
fn mlp_output_is_finite_and_shaped() {
    let field = MlpField::new(Dims(6, 5), &[9], 1.0, 0).unwrap();
    let out = field
        .evaluate(&Image::filled(6, 5, 0.5).unwrap(), 1.0, 1.0)
        .unwrap();
    assert_eq!(out.dims(), Dims(6, 5));
    assert!(out.data().iter().all(|v| v.is_finite()));
}
