// temporary gradient debug; removed before release
use trialmine::dataset::EncodedInstance;
use trialmine::model::{
    batch_loss, batch_loss_and_grads, finetune, init_model, pretrain, FinetuneMode, ModelConfig,
    Objective, TrainConfig, MIN_MAX_LEN,
};

fn main() {
    let config = ModelConfig {
        layers: 1,
        hidden: 8,
        heads: 1,
        ff_dim: 16,
        max_len: MIN_MAX_LEN,
        vocab_size: 24,
        label_count: 5,
        dropout: 0.0,
    };
    let mut params = init_model(&config, 14).unwrap();
    let mk = |ids: &[u32], label: u32| EncodedInstance {
        token_ids: ids.to_vec(),
        segment_ids: ids.iter().map(|_| 0u8).collect(),
        label_id: label,
        adversarial: false,
    };
    let batch = vec![mk(&[2, 7, 9, 11, 3, 6, 14, 3], 0), mk(&[2, 8, 10, 3, 12, 3], 2)];
    let objective = Objective::Ctrp;
    // warm up to a non-degenerate point
    let warm = TrainConfig {
        epochs: 50,
        batch_size: 2,
        learning_rate: 5e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let clm_batch = vec![mk(&[2, 7, 9, 11, 3, 6, 14, 3], 3), mk(&[2, 8, 10, 3, 12, 3], 4)];
    pretrain(&mut params, &clm_batch, None, &warm, |_, _, _| Ok(())).unwrap();
    finetune(&mut params, &batch, None, &warm, FinetuneMode::Full, |_, _, _| Ok(())).unwrap();
    let (_, analytic) = batch_loss_and_grads(&params, &batch, objective, None).unwrap();
    let n_tensors = params.visit().len();
    for t in 0..n_tensors {
        let name = params.visit()[t].0.clone();
        let len = params.visit()[t].1.data.len();
        let mut diff2 = 0.0;
        let mut na2 = 0.0;
        let mut nf2 = 0.0;
        let mut worst = (0usize, 0.0f64, 0.0f64);
        for i in 0..len {
            let orig = params.visit()[t].1.data[i];
            let h = 1e-5 * orig.abs().max(1.0);
            params.visit_mut()[t].1.data[i] = orig + h;
            let up = batch_loss(&params, &batch, objective).unwrap();
            params.visit_mut()[t].1.data[i] = orig - h;
            let down = batch_loss(&params, &batch, objective).unwrap();
            params.visit_mut()[t].1.data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic.visit()[t].1.data[i];
            diff2 += (a - fd) * (a - fd);
            na2 += a * a;
            nf2 += fd * fd;
            if (a - fd).abs() > worst.1 {
                worst = (i, (a - fd).abs(), fd);
            }
        }
        let rel = diff2.sqrt() / na2.sqrt().max(nf2.sqrt()).max(1e-12);
        println!(
            "{name:24} rel {rel:10.3e}  |a| {:10.3e} |fd| {:10.3e}  worst idx {} absdiff {:.3e} fd {:.3e}",
            na2.sqrt(), nf2.sqrt(), worst.0, worst.1, worst.2
        );
    }
}
