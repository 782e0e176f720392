//! Trains the LSTM on a toy sequence task (output the input bit from two
//! steps earlier), then saves and reloads it.

use nilm::lstm::{load_checkpoint, save_checkpoint, train, window_accuracy, LstmConfig, LstmModel, TrainConfig, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn windows(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<Window> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..len).map(|_| f64::from(rng.random_bool(0.5))).collect();
            let y = (0..len).map(|t| if t >= 2 { x[t - 2] } else { 0.0 }).collect();
            Window { inputs: x, targets: y }
        })
        .collect()
}

fn main() -> nilm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let train_set = windows(256, 12, &mut rng);
    let val_set = windows(64, 12, &mut rng);
    let cfg = LstmConfig { input_dim: 1, lstm_units: 8, fc_units: 8, output_dim: 1, dropout_p: 0.0, init_range: 0.3 };
    let mut model = LstmModel::new(cfg, &mut rng)?;
    let tc = TrainConfig { batch_size: 16, epochs: 40, lr: 0.02, seed: 5, ..TrainConfig::default() };
    let report = train(&mut model, &train_set, &val_set, &tc)?;
    println!("loss {:.4} -> {:.4}", report.epoch_loss[0], report.epoch_loss.last().unwrap());
    println!("validation accuracy {:.3} (best epoch {:?})", window_accuracy(&model, &val_set)?, report.best_epoch);

    let path = std::env::temp_dir().join(format!("nilm-delay-{}.ckpt", std::process::id()));
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path)?;
    println!("checkpoint round trip identical: {}", back == model);
    let _ = std::fs::remove_file(&path);
    Ok(())
}
