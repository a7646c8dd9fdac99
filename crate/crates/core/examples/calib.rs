// temporary calibration harness; removed before release
use std::time::Instant;

use trialmine::corpus::{SectionMap, Segmenter};
use trialmine::dataset::{
    build_pretrain_dataset, encode_pretrain, split_holdout, EncodeOptions, Tokenizer,
};
use trialmine::disentangle::LabelVocabulary;
use trialmine::mine::{mine_corpus, Lexicon};
use trialmine::model::{init_model, pretrain, ModelConfig, TrainConfig};
use trialmine::synth::{generate, SynthConfig};

fn main() {
    let t0 = Instant::now();
    let config = SynthConfig {
        seed: 7,
        n_docs: 2500,
        ..SynthConfig::default()
    };
    let corpus = generate(&config);
    let vocab = LabelVocabulary::default();
    let (records, rejected) = mine_corpus(
        &corpus.documents,
        &Lexicon::default(),
        &vocab,
        &SectionMap::default(),
        &Segmenter::default(),
    );
    println!(
        "mined {} ({} rejected) in {:?}",
        records.len(),
        rejected.len(),
        t0.elapsed()
    );
    let (instances, _hist) = build_pretrain_dataset(&records, &vocab, 1.0, 13).unwrap();
    println!("instances {}", instances.len());

    let mut lines = vec![];
    for i in &instances {
        lines.push(i.background.as_str());
        lines.push(i.evidence.as_str());
    }
    let tok = Tokenizer::train(lines, 8192, 1).unwrap();
    println!("vocab {}", tok.vocab_size());
    let opts = EncodeOptions::default();
    let encoded: Vec<_> = instances
        .iter()
        .map(|i| encode_pretrain(&tok, i, &opts, &vocab).unwrap())
        .collect();
    let max_len = encoded.iter().map(|e| e.token_ids.len()).max().unwrap();
    println!("max encoded len {max_len}");
    let (tr, ho) = split_holdout(encoded.len(), 0.1, 99);
    let train: Vec<_> = tr.iter().map(|&i| encoded[i].clone()).collect();
    let hold: Vec<_> = ho.iter().map(|&i| encoded[i].clone()).collect();

    let mc = ModelConfig {
        vocab_size: tok.vocab_size(),
        label_count: vocab.len(),
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut params = init_model(&mc, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let _stats = pretrain(&mut params, &train, Some(&hold), &cfg, |e, _, s| {
        println!(
            "epoch {e} loss {:.4} acc {:?} ({:?})",
            s.train_loss,
            s.holdout_accuracy,
            t1.elapsed()
        );
        Ok(())
    })
    .unwrap();
    println!("total {:?}", t0.elapsed());
}
