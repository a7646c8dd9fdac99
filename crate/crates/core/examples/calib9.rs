// temporary transfer/robustness calibration; removed before release
use std::time::Instant;

use trialmine::adversarial::make_adversarial_finetune;
use trialmine::corpus::{SectionMap, Segmenter};
use trialmine::dataset::{
    build_pretrain_dataset, encode_finetune, encode_pretrain, split_holdout, EncodeOptions,
    EncodedInstance, FinetuneInstance, Tokenizer,
};
use trialmine::disentangle::LabelVocabulary;
use trialmine::mine::{mine_corpus, Lexicon};
use trialmine::model::{
    finetune, init_model, predict_result, pretrain, FinetuneMode, ModelConfig, ModelParams,
    TrainConfig,
};
use trialmine::synth::{generate, generate_finetune, SynthConfig};

fn encode_set(
    tok: &Tokenizer,
    insts: &[FinetuneInstance],
    opts: &EncodeOptions,
) -> Vec<EncodedInstance> {
    insts.iter().map(|i| encode_finetune(tok, i, opts)).collect()
}

fn accuracy(params: &ModelParams, set: &[EncodedInstance]) -> f64 {
    let (preds, _) = predict_result(params, set).unwrap();
    let correct = preds
        .iter()
        .zip(set)
        .filter(|(&p, inst)| p == inst.label_id as usize)
        .count();
    correct as f64 / set.len() as f64
}

fn main() {
    let t0 = Instant::now();
    let config = SynthConfig {
        seed: 7,
        n_docs: 2500,
        n_interventions: 16,
        ..SynthConfig::default()
    };
    let corpus = generate(&config);
    let vocab = LabelVocabulary::default();
    let (records, _) = mine_corpus(
        &corpus.documents,
        &Lexicon::default(),
        &vocab,
        &SectionMap::default(),
        &Segmenter::default(),
    );
    let (adv_instances, _) = build_pretrain_dataset(&records, &vocab, 1.0, 13).unwrap();
    let (noadv_instances, _) = build_pretrain_dataset(&records, &vocab, 0.0, 13).unwrap();

    let mut lines = vec![];
    for i in &adv_instances {
        lines.push(i.background.as_str());
        lines.push(i.evidence.as_str());
    }
    let tok = Tokenizer::train(lines, 8192, 1).unwrap();
    let opts = EncodeOptions::default();
    let enc_adv: Vec<_> = adv_instances
        .iter()
        .map(|i| encode_pretrain(&tok, i, &opts, &vocab).unwrap())
        .collect();
    let enc_noadv: Vec<_> = noadv_instances
        .iter()
        .map(|i| encode_pretrain(&tok, i, &opts, &vocab).unwrap())
        .collect();

    let mc = ModelConfig {
        vocab_size: tok.vocab_size(),
        label_count: vocab.len(),
        dropout: 0.1,
        ..ModelConfig::default()
    };
    let pt_cfg = TrainConfig {
        epochs: 20,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };

    // adversarially pre-trained model (with holdout reporting, dropout 0.1)
    let (tr, ho) = split_holdout(enc_adv.len(), 0.1, 99);
    let train: Vec<_> = tr.iter().map(|&i| enc_adv[i].clone()).collect();
    let hold: Vec<_> = ho.iter().map(|&i| enc_adv[i].clone()).collect();
    let mut adv_params = init_model(&mc, 1).unwrap();
    let stats = pretrain(&mut adv_params, &train, Some(&hold), &pt_cfg, |e, _, s| {
        if e % 2 == 0 {
            println!(
                "adv pretrain epoch {e}: loss {:.4} acc {:?} ({:?})",
                s.train_loss,
                s.holdout_accuracy,
                t0.elapsed()
            );
        }
        Ok(())
    })
    .unwrap();
    let best = stats
        .iter()
        .filter_map(|s| s.holdout_accuracy)
        .fold(0.0f64, f64::max);
    println!("adv pretrain best holdout acc {best} ({:?})", t0.elapsed());

    // non-adversarial ablation
    let mut noadv_params = init_model(&mc, 1).unwrap();
    pretrain(&mut noadv_params, &enc_noadv, None, &pt_cfg, |_, _, _| Ok(())).unwrap();
    println!("noadv pretrain done ({:?})", t0.elapsed());

    // fine-tune worlds
    let ft_train = generate_finetune(&config, 1007, 500);
    let ft_test = generate_finetune(&config, 2007, 500);
    let ft_test_adv: Vec<FinetuneInstance> = ft_test
        .iter()
        .cloned()
        .chain(ft_test.iter().map(make_adversarial_finetune))
        .collect();
    let enc_train = encode_set(&tok, &ft_train, &opts);
    let enc_test = encode_set(&tok, &ft_test, &opts);
    let enc_test_adv = encode_set(&tok, &ft_test_adv, &opts);
    let enc_train_10: Vec<_> = enc_train[..50].to_vec();

    let ft_cfg = TrainConfig {
        epochs: 15,
        learning_rate: 2e-3,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    };

    let mut runs: Vec<(&str, ModelParams, &[EncodedInstance])> = vec![
        ("pretrained@500", adv_params.clone(), &enc_train),
        ("fresh@500", init_model(&mc, 1).unwrap(), &enc_train),
        ("pretrained@50", adv_params.clone(), &enc_train_10),
        ("noadv@500", noadv_params.clone(), &enc_train),
    ];
    for (name, params, data) in &mut runs {
        finetune(params, data, None, &ft_cfg, FinetuneMode::Full, |_, _, _| Ok(())).unwrap();
        let std_acc = accuracy(params, &enc_test);
        let adv_acc = accuracy(params, &enc_test_adv);
        let delta = (std_acc - adv_acc).abs() / std_acc * 100.0;
        println!(
            "{name}: std {std_acc:.4} adv {adv_acc:.4} |delta| {delta:.2} ({:?})",
            t0.elapsed()
        );
    }
    println!("total {:?}", t0.elapsed());
}
