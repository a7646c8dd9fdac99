// temporary order-learnability probe; removed before release
use std::time::Instant;

use trialmine::dataset::EncodedInstance;
use trialmine::model::{init_model, pretrain, ModelConfig, TrainConfig, MIN_MAX_LEN};

fn main() {
    let tokens: Vec<u32> = (6..14).collect(); // 8 "drugs"
    let mut train = Vec::new();
    for (ai, &a) in tokens.iter().enumerate() {
        for &b in tokens.iter().skip(ai + 1) {
            // [CLS] bgfiller [SEP] a mid b [SEP]  -> label by order
            for (x, y, label) in [(a, b, 0u32), (b, a, 1u32)] {
                let ids = vec![2, 14, 15, 3, x, 16, y, 3];
                let segs = vec![0, 0, 0, 0, 1, 1, 1, 1];
                train.push(EncodedInstance {
                    token_ids: ids,
                    segment_ids: segs,
                    label_id: label,
                    adversarial: false,
                });
            }
        }
    }
    println!("{} instances", train.len());
    let config = ModelConfig {
        layers: 2,
        hidden: 64,
        heads: 2,
        ff_dim: 256,
        max_len: MIN_MAX_LEN,
        vocab_size: 20,
        label_count: 2,
        dropout: 0.0,
    };
    let mut params = init_model(&config, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 32,
        learning_rate: 2e-3,
        seed: 5,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let holdout = train.clone();
    pretrain(&mut params, &train, Some(&holdout), &cfg, |e, _, s| {
        if e % 5 == 0 || e == 1 {
            println!(
                "epoch {e}: loss {:.4} train-acc {:?} ({:?})",
                s.train_loss,
                s.holdout_accuracy,
                t0.elapsed()
            );
        }
        Ok(())
    })
    .unwrap();
}
