// temporary fine-tune format calibration; removed before release
use std::time::Instant;

use trialmine::adversarial::make_adversarial_finetune;
use trialmine::corpus::{SectionMap, Segmenter};
use trialmine::dataset::{
    build_pretrain_dataset, encode_finetune, encode_pretrain, EncodeOptions, EncodedInstance,
    FinetuneInstance, PicoElement, Tokenizer,
};
use trialmine::disentangle::LabelVocabulary;
use trialmine::mine::{mine_corpus, Lexicon};
use trialmine::model::{
    finetune, init_model, load_checkpoint, predict_result, pretrain, save_checkpoint,
    CheckpointMeta, FinetuneMode, ModelConfig, ModelParams, TrainConfig,
};
use trialmine::synth::{generate, generate_finetune, SynthConfig};

fn accuracy(params: &ModelParams, set: &[EncodedInstance]) -> f64 {
    let (preds, _) = predict_result(params, set).unwrap();
    let correct = preds
        .iter()
        .zip(set)
        .filter(|(&p, inst)| p == inst.label_id as usize)
        .count();
    correct as f64 / set.len() as f64
}

fn with_preposition(insts: &[FinetuneInstance]) -> Vec<FinetuneInstance> {
    insts
        .iter()
        .map(|i| FinetuneInstance {
            intervention: format!("patients in {}", i.intervention),
            comparator: format!("patients in {}", i.comparator),
            ..i.clone()
        })
        .collect()
}

fn main() {
    let t0 = Instant::now();
    let config = SynthConfig {
        seed: 7,
        n_docs: 2500,
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
    let meta = CheckpointMeta {
        config: mc.clone(),
        tokenizer_tokens: tok.tokens().to_vec(),
        labels: vocab.names().map(String::from).collect(),
        encode: EncodeOptions::default(),
    };
    let adv_ckpt = std::path::Path::new("/tmp/calib-adv.ckpt");
    let noadv_ckpt = std::path::Path::new("/tmp/calib-noadv.ckpt");
    let (adv_params, noadv_params) = if adv_ckpt.exists() && noadv_ckpt.exists() {
        println!("loading cached pretrained checkpoints");
        (load_checkpoint(adv_ckpt).unwrap().0, load_checkpoint(noadv_ckpt).unwrap().0)
    } else {
        let mut adv_params = init_model(&mc, 1).unwrap();
        pretrain(&mut adv_params, &enc_adv, None, &pt_cfg, |_, _, _| Ok(())).unwrap();
        println!("adv pretrain done ({:?})", t0.elapsed());
        let mut noadv_params = init_model(&mc, 1).unwrap();
        pretrain(&mut noadv_params, &enc_noadv, None, &pt_cfg, |_, _, _| Ok(())).unwrap();
        println!("noadv pretrain done ({:?})", t0.elapsed());
        save_checkpoint(adv_ckpt, &adv_params, &meta).unwrap();
        save_checkpoint(noadv_ckpt, &noadv_params, &meta).unwrap();
        (adv_params, noadv_params)
    };

    let ft_train_base = generate_finetune(&config, 1007, 500);
    let ft_test_base = generate_finetune(&config, 2007, 500);

    let oic = vec![
        PicoElement::Outcome,
        PicoElement::Intervention,
        PicoElement::Comparator,
    ];

    for (name, layout, preposition, epochs) in [
        ("OIC/patients/15", Some(oic.clone()), true, 15),
        ("IOC/patients/15", None, true, 15),
    ] {
        let mut opts = EncodeOptions::default();
        if let Some(l) = layout {
            opts.layout = l;
        }
        let (train_i, test_i) = if preposition {
            (with_preposition(&ft_train_base), with_preposition(&ft_test_base))
        } else {
            (ft_train_base.clone(), ft_test_base.clone())
        };
        let test_adv: Vec<FinetuneInstance> = test_i
            .iter()
            .cloned()
            .chain(test_i.iter().map(make_adversarial_finetune))
            .collect();
        let enc_train: Vec<_> = train_i.iter().map(|i| encode_finetune(&tok, i, &opts)).collect();
        let enc_test: Vec<_> = test_i.iter().map(|i| encode_finetune(&tok, i, &opts)).collect();
        let enc_test_adv: Vec<_> =
            test_adv.iter().map(|i| encode_finetune(&tok, i, &opts)).collect();
        let enc_train_10: Vec<_> = enc_train[..50].to_vec();

        let ft_cfg = TrainConfig {
            epochs,
            learning_rate: 2e-3,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut runs: Vec<(&str, ModelParams, &[EncodedInstance])> = vec![
            ("pre@500", adv_params.clone(), &enc_train),
            ("fresh@500", init_model(&mc, 1).unwrap(), &enc_train),
            ("pre@50", adv_params.clone(), &enc_train_10),
            ("noadv@500", noadv_params.clone(), &enc_train),
        ];
        for (run, params, data) in &mut runs {
            finetune(params, data, None, &ft_cfg, FinetuneMode::Full, |_, _, _| Ok(())).unwrap();
            let std_acc = accuracy(params, &enc_test);
            let adv_acc = accuracy(params, &enc_test_adv);
            let delta = (std_acc - adv_acc).abs() / std_acc * 100.0;
            println!(
                "{name} {run}: std {std_acc:.4} adv {adv_acc:.4} |d| {delta:.2} ({:?})",
                t0.elapsed()
            );
        }
    }
    println!("total {:?}", t0.elapsed());
}
