mod common;

use nilm::lstm::{lstm_forward, train, LstmConfig, LstmModel, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_finite_differences() {
    for (seed, cfg, steps) in common::random_configs(20, 100) {
        let err = common::gradient_check(seed, cfg, steps, 1e-5);
        assert!(err <= 1e-4, "seed {seed} {cfg:?} T={steps}: max relative error {err:e}");
    }
}

#[test]
fn inverted_dropout_preserves_the_expected_logit() {
    // With a large FC bias the ReLU never clips, so the output logit is linear
    // in the dropped-out LSTM state and its mean over masks equals eval mode.
    let cfg = LstmConfig { input_dim: 1, lstm_units: 6, fc_units: 4, output_dim: 1, dropout_p: 0.4, init_range: 0.4 };
    let mut model = LstmModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    model.params.b_fc.iter_mut().for_each(|b| *b = 10.0);
    model.params.w_out.iter_mut().for_each(|w| *w *= 0.1);
    let x = [0.3, -0.8, 0.5, 0.9];
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let eval: Vec<f64> = model.predict(&x).unwrap().into_iter().map(logit).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 20_000;
    let mut mean = vec![0.0; x.len()];
    for _ in 0..draws {
        let (out, _) = lstm_forward(&model, &x, true, &mut rng).unwrap();
        for (m, p) in mean.iter_mut().zip(out) {
            *m += logit(p) / draws as f64;
        }
    }
    for (m, e) in mean.iter().zip(&eval) {
        assert!((m - e).abs() < 0.01, "train-mode mean logit {m} vs eval {e}");
    }
}

#[test]
fn toy_delay_task_loss_drops_tenfold() {
    let train_set = common::delay_windows(256, 12, 1);
    let val_set = common::delay_windows(64, 12, 2);
    let cfg = LstmConfig { input_dim: 1, lstm_units: 8, fc_units: 8, output_dim: 1, dropout_p: 0.0, init_range: 0.3 };
    let mut model = LstmModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let tc = TrainConfig { batch_size: 16, epochs: 40, lr: 0.02, seed: 4, keep_best: false, ..TrainConfig::default() };
    let report = train(&mut model, &train_set, &val_set, &tc).unwrap();
    let (first, last) = (report.epoch_loss[0], *report.epoch_loss.last().unwrap());
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}
