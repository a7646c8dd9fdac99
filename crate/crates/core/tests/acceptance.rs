//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines for passing criteria too.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trialmine::adversarial::{make_adversarial_finetune, make_adversarial_pretrain, reverse_evidence};
use trialmine::baselines::{
    logistic_grad, logistic_loss, majority_baseline, random_baseline_expected, tree_dist,
    MeshClassifier, MeshIndex, DEFAULT_NO_MATCH_PENALTY,
};
use trialmine::corpus::{normalize_ws, SectionMap, Segmenter};
use trialmine::dataset::{
    build_pretrain_dataset, encode_finetune, encode_pretrain, split_holdout, EncodeOptions,
    EncodedInstance, FinetuneInstance, PicoElement, ResultLabel, Tokenizer,
};
use trialmine::disentangle::{LabelVocabulary, PLACEHOLDER};
use trialmine::eval::{
    compute_metrics, opposite_rate_test, robustness_delta, ConfusionMatrix, OppositeRateOutcome,
};
use trialmine::mine::{detect_comparative, mine_corpus, Direction, ImplicitEvidenceRecord, Lexicon};
use trialmine::model::{
    batch_loss, batch_loss_and_grads, finetune, init_model, predict_result, pretrain,
    save_checkpoint, CheckpointMeta, EpochStat, FinetuneMode, Matrix, ModelConfig, ModelParams,
    Objective, TrainConfig, MIN_MAX_LEN,
};

use trialmine::synth::{generate, generate_finetune, SynthConfig};

fn pass(line: &str) {
    println!("[PASS] {line}");
}

// ---------------------------------------------------------------------------
// shared heavyweight fixture for criteria 8-10

struct TrainedFixture {
    model_config: ModelConfig,
    pretrain_stats: Vec<EpochStat>,
    pretrain_seconds: f64,
    adv_params: ModelParams,
    noadv_params: ModelParams,
    enc_ft_train: Vec<EncodedInstance>,
    enc_ft_test: Vec<EncodedInstance>,
    enc_ft_test_adv: Vec<EncodedInstance>,
}

fn synth_world() -> SynthConfig {
    SynthConfig {
        seed: 7,
        n_docs: 2500,
        ..SynthConfig::default()
    }
}

fn finetune_encode_options() -> EncodeOptions {
    // element order tuned on the synthetic world; the pipeline default
    // stays (I, O, C)
    EncodeOptions {
        layout: vec![
            PicoElement::Outcome,
            PicoElement::Intervention,
            PicoElement::Comparator,
        ],
        ..EncodeOptions::default()
    }
}

fn trained_fixture() -> &'static TrainedFixture {
    static FIXTURE: OnceLock<TrainedFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let config = synth_world();
        let corpus = generate(&config);
        let vocab = LabelVocabulary::default();
        let (records, rejected) = mine_corpus(
            &corpus.documents,
            &Lexicon::default(),
            &vocab,
            &SectionMap::default(),
            &Segmenter::default(),
        );
        assert!(rejected.is_empty());
        let (adv_instances, _) = build_pretrain_dataset(&records, &vocab, 1.0, 13).unwrap();
        let (noadv_instances, _) = build_pretrain_dataset(&records, &vocab, 0.0, 13).unwrap();

        let mut lines = Vec::with_capacity(adv_instances.len() * 2);
        for inst in &adv_instances {
            lines.push(inst.background.as_str());
            lines.push(inst.evidence.as_str());
        }
        let tokenizer = Tokenizer::train(lines, 8192, 1).unwrap();
        let opts = EncodeOptions::default();
        let enc_adv: Vec<EncodedInstance> = adv_instances
            .iter()
            .map(|i| encode_pretrain(&tokenizer, i, &opts, &vocab).unwrap())
            .collect();
        let enc_noadv: Vec<EncodedInstance> = noadv_instances
            .iter()
            .map(|i| encode_pretrain(&tokenizer, i, &opts, &vocab).unwrap())
            .collect();

        let model_config = ModelConfig {
            vocab_size: tokenizer.vocab_size(),
            label_count: vocab.len(),
            ..ModelConfig::default()
        };
        // well converged before epoch 14; the criterion allows up to 20
        let pt_cfg = TrainConfig {
            epochs: 14,
            learning_rate: 2e-3,
            ..TrainConfig::default()
        };

        let (train_idx, holdout_idx) = split_holdout(enc_adv.len(), 0.1, 99);
        let train: Vec<EncodedInstance> = train_idx.iter().map(|&i| enc_adv[i].clone()).collect();
        let holdout: Vec<EncodedInstance> =
            holdout_idx.iter().map(|&i| enc_adv[i].clone()).collect();

        let started = Instant::now();
        let mut adv_params = init_model(&model_config, 1).unwrap();
        let pretrain_stats =
            pretrain(&mut adv_params, &train, Some(&holdout), &pt_cfg, |_, _, _| Ok(())).unwrap();
        let pretrain_seconds = started.elapsed().as_secs_f64();

        let mut noadv_params = init_model(&model_config, 1).unwrap();
        pretrain(&mut noadv_params, &enc_noadv, None, &pt_cfg, |_, _, _| Ok(())).unwrap();

        let ft_train = generate_finetune(&config, 1007, 500);
        let ft_test = generate_finetune(&config, 2007, 500);
        let ft_test_adv: Vec<FinetuneInstance> = ft_test
            .iter()
            .cloned()
            .chain(ft_test.iter().map(make_adversarial_finetune))
            .collect();
        let ft_opts = finetune_encode_options();
        let encode_all = |set: &[FinetuneInstance]| -> Vec<EncodedInstance> {
            set.iter().map(|i| encode_finetune(&tokenizer, i, &ft_opts)).collect()
        };

        TrainedFixture {
            enc_ft_train: encode_all(&ft_train),
            enc_ft_test: encode_all(&ft_test),
            enc_ft_test_adv: encode_all(&ft_test_adv),
            model_config,
            pretrain_stats,
            pretrain_seconds,
            adv_params,
            noadv_params,
        }
    })
}

fn ft_config() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        learning_rate: 2e-3,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn finetune_from(params: &ModelParams, data: &[EncodedInstance]) -> ModelParams {
    let mut tuned = params.clone();
    finetune(&mut tuned, data, None, &ft_config(), FinetuneMode::Full, |_, _, _| Ok(()))
        .unwrap();
    tuned
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

// ---------------------------------------------------------------------------
// criterion 1: mining fidelity on the 10k synthetic corpus

#[test]
fn c01_mining_fidelity() {
    let started = Instant::now();
    let config = SynthConfig {
        seed: 7,
        n_docs: 10_000,
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
    assert!(rejected.is_empty(), "rejected sentences: {}", rejected.len());
    assert_eq!(records.len(), corpus.gold.len());
    for (rec, gold) in records.iter().zip(&corpus.gold) {
        assert_eq!(rec.doc_id, gold.doc_id);
        assert_eq!(rec.background, gold.background, "{}", gold.doc_id);
        assert_eq!(rec.e_ent, gold.e_ent, "{}", gold.doc_id);
        assert_eq!(rec.e_dis, gold.e_dis, "{}", gold.doc_id);
        assert_eq!(rec.r_text, gold.r_text, "{}", gold.doc_id);
        assert_eq!(rec.label, gold.label, "{}", gold.doc_id);
        assert_eq!(rec.direction, gold.direction, "{}", gold.doc_id);
        assert_eq!(rec.spans, gold.spans, "{}", gold.doc_id);
        // reconstruction: restoring span texts reproduces the sentence
        let mut restored = rec.e_dis.clone();
        for span in &rec.spans {
            restored = restored.replacen(PLACEHOLDER, &rec.e_ent[span.start..span.end], 1);
        }
        assert_eq!(restored, rec.e_ent, "{}", gold.doc_id);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "mining took {elapsed:.1}s");
    pass(&format!(
        "C1 mining fidelity: 10000/10000 records match gold labels and spans, \
         reconstruction exact, {elapsed:.1}s < 60s"
    ));
}

// ---------------------------------------------------------------------------
// criterion 2: trap set

#[test]
fn c02_trap_set() {
    let lexicon = Lexicon::default();
    let traps = [
        "The other investigators used a different protocol.",
        "The other arm followed standard care procedures.",
        "Patients in the other cohort withdrew early.",
        "We asked whether the treatment helped rather than harmed.",
        "Whether these findings generalize remains unclear.",
        "It is unclear whether adherence was complete.",
        "Patients were monitored after discharge for safety signals.",
        "Samples were collected after the final dose.",
        "Follow-up visits occurred after week twelve.",
        "Renal function was reassessed after each cycle.",
        "Adherence was assessed rather than assumed.",
        "Rather than excluding dropouts, we used intention-to-treat analysis.",
        "The committee met rather frequently during enrollment.",
        "Together, these data informed the analysis plan.",
        "Either regimen could be administered at home.",
        "Neither group completed the extension phase.",
        "Observers were blinded throughout the study period.",
        "The weather during recruitment was unremarkable.",
        "Another site joined the study in its second year.",
        "Further studies are warranted.",
        "An interim analysis was scheduled after fifty events.",
        "Other covariates entered the regression model.",
    ];
    assert!(traps.len() >= 20);
    let mut false_positives = Vec::new();
    for trap in traps {
        if detect_comparative(trap, &lexicon).is_some() {
            false_positives.push(trap);
        }
    }
    assert!(false_positives.is_empty(), "traps matched: {false_positives:?}");
    pass(&format!(
        "C2 trap set: 0 false positives on {} negative sentences",
        traps.len()
    ));
}

// ---------------------------------------------------------------------------
// criterion 3: vocabulary laws

#[test]
fn c03_vocabulary_laws() {
    let vocab = LabelVocabulary::default();
    assert_eq!(vocab.len(), 34);
    let mut fixed_points = 0;
    for name in vocab.names() {
        let anti = vocab.rev(name).unwrap();
        assert_eq!(vocab.rev(anti).unwrap(), name, "involution at {name}");
        assert_eq!(
            vocab.direction(anti).unwrap(),
            vocab.direction(name).unwrap().flip(),
            "direction flip at {name}"
        );
        if anti == name {
            fixed_points += 1;
            assert_eq!(vocab.direction(name).unwrap(), Direction::Eq);
        }
    }
    assert_eq!(fixed_points, 2);
    pass("C3 vocabulary: 34 labels, involutive antonym map, flip law, exactly 2 fixed points");
}

// ---------------------------------------------------------------------------
// criterion 4: adversarial involution over mined records

#[test]
fn c04_adversarial_involution() {
    let config = SynthConfig {
        seed: 11,
        n_docs: 1000,
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
    assert_eq!(records.len(), 1000);
    for (i, rec) in records.iter().enumerate() {
        let source = normalize_ws(&rec.e_dis);
        let twice = reverse_evidence(&reverse_evidence(&source).unwrap()).unwrap();
        assert_eq!(twice, source, "double reversal drifted for {}", rec.doc_id);

        let adv = make_adversarial_pretrain(rec, &vocab, &format!("{}#{i}", rec.doc_id)).unwrap();
        assert_eq!(
            vocab.direction(&adv.label).unwrap(),
            vocab.direction(&rec.label).unwrap().flip(),
            "label law violated for {}",
            rec.doc_id
        );
        assert_eq!(
            adv.e_rev.matches(PLACEHOLDER).count(),
            rec.e_dis.matches(PLACEHOLDER).count()
        );
    }
    pass("C4 adversarial involution: double reversal exact and label law holds on 1000 records");
}

// ---------------------------------------------------------------------------
// criterion 5: analytic metric reproduction

#[test]
fn c05_analytic_metrics() {
    // majority predictor against 41.76% prevalence
    let n = 10_000usize;
    let nodiff_count = 4176;
    let golds: Vec<ResultLabel> = std::iter::repeat_n(ResultLabel::Nodiff, nodiff_count)
        .chain(std::iter::repeat_n(ResultLabel::Up, (n - nodiff_count) / 2))
        .chain(std::iter::repeat_n(
            ResultLabel::Down,
            n - nodiff_count - (n - nodiff_count) / 2,
        ))
        .collect();
    let train = vec![ResultLabel::Nodiff, ResultLabel::Nodiff, ResultLabel::Up];
    let (majority, metrics) = majority_baseline(&train, &golds).unwrap();
    assert_eq!(majority, ResultLabel::Nodiff);
    assert!((metrics.accuracy - 0.4176).abs() < 1e-4);
    assert!(
        (metrics.macro_f1_3way - 0.1964).abs() < 1e-4,
        "macro-F1 {}",
        metrics.macro_f1_3way
    );

    // expected random accuracy is exactly 1/3
    let random = random_baseline_expected(&[0.2197, 0.4176, 0.3627]).unwrap();
    assert_eq!(random.accuracy, 1.0 / 3.0);

    // engine equals a brute-force oracle on 100 random confusion matrices
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..100 {
        let mut cm = ConfusionMatrix::default();
        for g in 0..3 {
            for p in 0..3 {
                cm.counts[g][p] = rng.random_range(0..200u64);
            }
        }
        if cm.total() == 0 {
            continue;
        }
        let m = compute_metrics(&cm).unwrap();
        let total = cm.total() as f64;
        let mut trace = 0u64;
        let mut f1s = [0.0f64; 3];
        for k in 0..3 {
            trace += cm.counts[k][k];
            let col: u64 = (0..3).map(|g| cm.counts[g][k]).sum();
            let row: u64 = cm.counts[k].iter().sum();
            let p = if col > 0 { cm.counts[k][k] as f64 / col as f64 } else { 0.0 };
            let r = if row > 0 { cm.counts[k][k] as f64 / row as f64 } else { 0.0 };
            f1s[k] = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        assert!((m.accuracy - trace as f64 / total).abs() < 1e-9);
        for k in 0..3 {
            assert!((m.f1_per_class[k] - f1s[k]).abs() < 1e-9);
        }
        assert!((m.macro_f1_3way - (f1s[0] + f1s[1] + f1s[2]) / 3.0).abs() < 1e-9);
        assert!((m.macro_f1_2way - (f1s[0] + f1s[2]) / 2.0).abs() < 1e-9);
    }
    pass(
        "C5 analytic metrics: majority 41.76/19.64 reproduced, random accuracy 33.33 exact, \
         engine matches brute-force oracle on 100 random matrices to 1e-9",
    );
}

// ---------------------------------------------------------------------------
// criterion 6: opposite-rate arithmetic and permutation stability

fn opposite_fixture() -> (Vec<ResultLabel>, Vec<ResultLabel>) {
    // 965 instances, 373 errors of which 44 are opposite
    let golds: Vec<ResultLabel> = std::iter::repeat_n(ResultLabel::Up, 212)
        .chain(std::iter::repeat_n(ResultLabel::Nodiff, 403))
        .chain(std::iter::repeat_n(ResultLabel::Down, 350))
        .collect();
    let mut preds = golds.clone();
    // 22 up->down and 22 down->up opposite errors
    for p in preds.iter_mut().take(22) {
        *p = ResultLabel::Down;
    }
    for p in preds.iter_mut().skip(615).take(22) {
        *p = ResultLabel::Up;
    }
    // 329 non-opposite errors
    for p in preds.iter_mut().skip(22).take(150) {
        *p = ResultLabel::Nodiff; // up -> nodiff
    }
    for p in preds.iter_mut().skip(212).take(100) {
        *p = ResultLabel::Up; // nodiff -> up
    }
    for p in preds.iter_mut().skip(312).take(79) {
        *p = ResultLabel::Down; // nodiff -> down
    }
    (preds, golds)
}

#[test]
fn c06_opposite_rate() {
    let (preds, golds) = opposite_fixture();
    let outcome = opposite_rate_test(&preds, &golds, 10_000, 1).unwrap();
    let OppositeRateOutcome::Defined { errors, opposite, share, p_value } = outcome else {
        panic!("test unexpectedly undefined");
    };
    assert_eq!(errors, 373);
    assert_eq!(opposite, 44);
    assert!((share * 100.0 - 11.8).abs() < 0.05, "share {share}");
    assert!(p_value < 0.001, "p {p_value}");

    // stability across seeds at 10k permutations
    let mut p_values = vec![p_value];
    for seed in 2..=4 {
        match opposite_rate_test(&preds, &golds, 10_000, seed).unwrap() {
            OppositeRateOutcome::Defined { p_value, .. } => p_values.push(p_value),
            _ => unreachable!(),
        }
    }
    let spread = p_values.iter().cloned().fold(f64::MIN, f64::max)
        - p_values.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.02, "p-value spread {spread} across seeds");

    // agreement with a 10x larger permutation run
    let OppositeRateOutcome::Defined { p_value: p_large, .. } =
        opposite_rate_test(&preds, &golds, 100_000, 9).unwrap()
    else {
        unreachable!()
    };
    assert!((p_value - p_large).abs() <= 0.01);
    pass(&format!(
        "C6 opposite rate: 44/373 = {:.1}% (within 0.05 of 11.8), p-value stable across seeds \
         (spread {spread:.4}) and against a 10x larger run",
        share * 100.0
    ));
}

// ---------------------------------------------------------------------------
// criterion 7: gradient checks

fn group_relative_error(analytic: &ModelParams, numeric: &ModelParams) -> Vec<(String, f64)> {
    analytic
        .visit()
        .into_iter()
        .zip(numeric.visit())
        .map(|((name, a), (_, f))| {
            let diff: f64 = a
                .data
                .iter()
                .zip(&f.data)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let na: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nf: f64 = f.data.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = na.max(nf);
            // a group that is zero on both routes has no meaningful relative
            // error; the attention key bias is exactly such a group (softmax
            // is invariant to a shared score shift)
            if scale < 1e-9 {
                (name, 0.0)
            } else {
                (name, diff / scale)
            }
        })
        .collect()
}

#[test]
fn c07_gradient_checks() {
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

    // move off the initialization point first: at scaled-normal init the
    // query/key gradients are orders of magnitude below the finite-
    // difference noise floor and the ratio is meaningless
    let warm = TrainConfig {
        epochs: 50,
        batch_size: 2,
        learning_rate: 5e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let clm_batch = vec![mk(&[2, 7, 9, 11, 3, 6, 14, 3], 3), mk(&[2, 8, 10, 3, 12, 3], 4)];
    let ctrp_batch = vec![mk(&[2, 7, 9, 11, 3, 6, 14, 3], 0), mk(&[2, 8, 10, 3, 12, 3], 2)];
    pretrain(&mut params, &clm_batch, None, &warm, |_, _, _| Ok(())).unwrap();
    finetune(&mut params, &ctrp_batch, None, &warm, FinetuneMode::Full, |_, _, _| Ok(())).unwrap();

    for (objective, batch) in [
        (Objective::Clm, clm_batch.clone()),
        (Objective::Ctrp, ctrp_batch.clone()),
    ] {
        let (_, analytic) = batch_loss_and_grads(&params, &batch, objective, None).unwrap();
        let mut numeric = params.zeros_like();
        let n_tensors = params.visit().len();
        for t in 0..n_tensors {
            let len = params.visit()[t].1.data.len();
            for i in 0..len {
                let orig = params.visit()[t].1.data[i];
                let h = 1e-5 * orig.abs().max(1.0);
                params.visit_mut()[t].1.data[i] = orig + h;
                let up = batch_loss(&params, &batch, objective).unwrap();
                params.visit_mut()[t].1.data[i] = orig - h;
                let down = batch_loss(&params, &batch, objective).unwrap();
                params.visit_mut()[t].1.data[i] = orig;
                numeric.visit_mut()[t].1.data[i] = (up - down) / (2.0 * h);
            }
        }
        for (name, rel) in group_relative_error(&analytic, &numeric) {
            assert!(rel < 1e-4, "{objective:?} group {name}: relative error {rel:.3e}");
        }
    }

    // logistic regression gradient against central differences
    let features: Vec<trialmine::baselines::SparseVector> = (0..8)
        .map(|i| trialmine::baselines::SparseVector {
            indices: vec![i % 4, (i + 1) % 4],
            values: vec![0.5 + 0.1 * i as f64, 1.0 - 0.05 * i as f64],
        })
        .collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let mut weights = Matrix::zeros(3, 4);
    for (i, v) in weights.data.iter_mut().enumerate() {
        *v = 0.07 * (i as f64 - 5.0);
    }
    let l2 = 0.01;
    let grad = logistic_grad(&weights, &features, &labels, l2);
    let h = 1e-6;
    for idx in 0..weights.data.len() {
        let orig = weights.data[idx];
        weights.data[idx] = orig + h;
        let up = logistic_loss(&weights, &features, &labels, l2);
        weights.data[idx] = orig - h;
        let down = logistic_loss(&weights, &features, &labels, l2);
        weights.data[idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad.data[idx]).abs() / fd.abs().max(grad.data[idx].abs()).max(1e-8);
        assert!(rel < 1e-5, "weight {idx}: relative error {rel:.3e}");
    }
    pass(
        "C7 gradient checks: every transformer parameter group < 1e-4 relative error \
         (both heads), logistic gradient < 1e-5",
    );
}

// ---------------------------------------------------------------------------
// criterion 8: CLM learnability

#[test]
fn c08_clm_learnability() {
    let fixture = trained_fixture();
    let best = fixture
        .pretrain_stats
        .iter()
        .filter_map(|s| s.holdout_accuracy)
        .fold(0.0f64, f64::max);
    assert!(best >= 0.95, "best holdout accuracy {best}");
    assert!(
        fixture.pretrain_seconds < 600.0,
        "pre-training took {:.0}s",
        fixture.pretrain_seconds
    );
    let first_reaching = fixture
        .pretrain_stats
        .iter()
        .find(|s| s.holdout_accuracy.map(|a| a >= 0.95).unwrap_or(false))
        .map(|s| s.epoch)
        .unwrap();
    pass(&format!(
        "C8 learnability: held-out label accuracy {:.1}% (>= 95% from epoch {first_reaching} \
         of 20) in {:.0}s < 600s",
        best * 100.0,
        fixture.pretrain_seconds
    ));
}

// ---------------------------------------------------------------------------
// criterion 9: transfer direction

#[test]
fn c09_transfer_direction() {
    let fixture = trained_fixture();
    let pre_500 = finetune_from(&fixture.adv_params, &fixture.enc_ft_train);
    let fresh = init_model(&fixture.model_config, 1).unwrap();
    let fresh_500 = finetune_from(&fresh, &fixture.enc_ft_train);
    let pre_50 = finetune_from(&fixture.adv_params, &fixture.enc_ft_train[..50]);

    let acc_pre = accuracy(&pre_500, &fixture.enc_ft_test);
    let acc_fresh = accuracy(&fresh_500, &fixture.enc_ft_test);
    let acc_pre_10pct = accuracy(&pre_50, &fixture.enc_ft_test);

    assert!(
        acc_pre - acc_fresh >= 0.10,
        "pre-trained {acc_pre:.3} vs fresh {acc_fresh:.3}"
    );
    assert!(
        acc_pre_10pct >= acc_fresh,
        "pre-trained@10% {acc_pre_10pct:.3} vs fresh@100% {acc_fresh:.3}"
    );
    pass(&format!(
        "C9 transfer: pre-trained {:.1}% vs fresh {:.1}% (gap {:.1} >= 10 points); \
         pre-trained on 10% of data {:.1}% >= fresh on 100%",
        acc_pre * 100.0,
        acc_fresh * 100.0,
        (acc_pre - acc_fresh) * 100.0,
        acc_pre_10pct * 100.0
    ));
}

// ---------------------------------------------------------------------------
// criterion 10: robustness direction

#[test]
fn c10_robustness_direction() {
    let fixture = trained_fixture();
    let adv_model = finetune_from(&fixture.adv_params, &fixture.enc_ft_train);
    let noadv_model = finetune_from(&fixture.noadv_params, &fixture.enc_ft_train);

    let delta = |model: &ModelParams| {
        let std_acc = accuracy(model, &fixture.enc_ft_test);
        let adv_acc = accuracy(model, &fixture.enc_ft_test_adv);
        robustness_delta(std_acc, adv_acc)
    };
    let delta_adv = delta(&adv_model);
    let delta_noadv = delta(&noadv_model);
    assert!(
        delta_adv <= delta_noadv,
        "|delta| adversarially pre-trained {delta_adv:.2} vs plain {delta_noadv:.2}"
    );
    pass(&format!(
        "C10 robustness: |delta| {delta_adv:.2}% (adversarial pre-training) <= \
         {delta_noadv:.2}% (without)"
    ));
}

// ---------------------------------------------------------------------------
// criterion 11: tree distance against a BFS oracle

fn bfs_distance(edges: &[(usize, usize)], n: usize, a: usize, b: usize) -> Option<u32> {
    let mut adjacency = vec![Vec::new(); n];
    for &(x, y) in edges {
        adjacency[x].push(y);
        adjacency[y].push(x);
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[a] = 0;
    queue.push_back(a);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    (dist[b] != u32::MAX).then_some(dist[b])
}

#[test]
fn c11_tree_distance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for tree_idx in 0..100 {
        // materialize a random tree of dot-path nodes, depth <= 6
        let mut numbers: Vec<String> = vec!["T01".to_string()];
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let node_count = 2 + rng.random_range(0..30usize);
        for _ in 0..node_count {
            let parent = rng.random_range(0..numbers.len());
            if numbers[parent].split('.').count() >= 6 {
                continue;
            }
            let child = format!("{}.{:03}", numbers[parent], rng.random_range(0..999u32));
            if numbers.contains(&child) {
                continue;
            }
            numbers.push(child.clone());
            edges.push((parent, numbers.len() - 1));
        }
        for a in 0..numbers.len() {
            for b in 0..numbers.len() {
                let expected = bfs_distance(&edges, numbers.len(), a, b).unwrap();
                let got = tree_dist(&numbers[a], &numbers[b]).unwrap();
                assert_eq!(
                    got, expected,
                    "tree {tree_idx}: {} vs {}",
                    numbers[a], numbers[b]
                );
            }
        }
    }

    // 3-instance fixture against exhaustive hand computation
    let index = MeshIndex::from_tsv(
        "aspirin\tD02.455\nibuprofen\tD02.456.100\nplacebo\tD26.660\n\
         mortality\tC23.550\nheadache\tC23.888.592\n",
    )
    .unwrap();
    let inst = |i: &str, c: &str, o: &str, r: ResultLabel| FinetuneInstance {
        background: String::new(),
        population: None,
        intervention: i.into(),
        comparator: c.into(),
        outcome: o.into(),
        result: r,
    };
    let train = vec![
        inst("aspirin", "placebo", "mortality", ResultLabel::Down),
        inst("ibuprofen", "placebo", "headache", ResultLabel::Up),
        inst("aspirin", "placebo", "headache", ResultLabel::Nodiff),
    ];
    let clf = MeshClassifier::fit(index, &train, DEFAULT_NO_MATCH_PENALTY).unwrap();
    // test: ibuprofen vs placebo on mortality
    // distances by hand:
    //   I: ibuprofen(D02.456.100) -> aspirin(D02.455) = 3, -> ibuprofen = 0
    //   C: placebo -> placebo = 0
    //   O: mortality(C23.550) -> mortality = 0, -> headache(C23.888.592) = 3
    //   train0 = 3 + 0 + 0 = 3; train1 = 0 + 0 + 3 = 3; train2 = 3 + 0 + 3 = 6
    // minimum distance 3 shared by train0 (down) and train1 (up):
    // majority vote ties, broken toward up over down
    let pred = clf.predict(&inst("ibuprofen", "placebo", "mortality", ResultLabel::Nodiff));
    assert!(!pred.fallback);
    assert_eq!(pred.label, ResultLabel::Up);
    pass("C11 tree distance: equals BFS oracle on 100 random trees; nearest-neighbor fixture matches hand computation");
}

// ---------------------------------------------------------------------------
// criterion 12: determinism

#[test]
fn c12_determinism() {
    // dataset bytes
    let config = SynthConfig {
        seed: 21,
        n_docs: 150,
        ..SynthConfig::default()
    };
    let vocab = LabelVocabulary::default();
    let run = || -> (Vec<u8>, Vec<ImplicitEvidenceRecord>) {
        let corpus = generate(&config);
        let (records, _) = mine_corpus(
            &corpus.documents,
            &Lexicon::default(),
            &vocab,
            &SectionMap::default(),
            &Segmenter::default(),
        );
        let (instances, _) = build_pretrain_dataset(&records, &vocab, 1.0, 5).unwrap();
        let mut bytes = Vec::new();
        for inst in &instances {
            bytes.extend(serde_json::to_vec(inst).unwrap());
            bytes.push(b'\n');
        }
        (bytes, records)
    };
    let (bytes_a, records) = run();
    let (bytes_b, _) = run();
    assert_eq!(bytes_a, bytes_b, "dataset bytes differ between runs");

    // checkpoint bytes after a short training run, twice
    let (instances, _) = build_pretrain_dataset(&records, &vocab, 1.0, 5).unwrap();
    let mut lines = Vec::new();
    for inst in &instances {
        lines.push(inst.background.as_str());
        lines.push(inst.evidence.as_str());
    }
    let tokenizer = Tokenizer::train(lines, 4096, 1).unwrap();
    let opts = EncodeOptions::default();
    let encoded: Vec<EncodedInstance> = instances
        .iter()
        .map(|i| encode_pretrain(&tokenizer, i, &opts, &vocab).unwrap())
        .collect();
    let model_config = ModelConfig {
        layers: 1,
        hidden: 32,
        heads: 2,
        ff_dim: 64,
        max_len: MIN_MAX_LEN,
        vocab_size: tokenizer.vocab_size(),
        label_count: vocab.len(),
        dropout: 0.1,
    };
    let train_cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        seed: 8,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let train_once = |path: &std::path::Path| -> (Vec<f64>, Vec<u8>) {
        let mut params = init_model(&model_config, 4).unwrap();
        let stats = pretrain(&mut params, &encoded, None, &train_cfg, |_, _, _| Ok(())).unwrap();
        let meta = CheckpointMeta {
            config: model_config.clone(),
            tokenizer_tokens: tokenizer.tokens().to_vec(),
            labels: vocab.names().map(String::from).collect(),
            encode: opts.clone(),
        };
        save_checkpoint(path, &params, &meta).unwrap();
        (
            stats.iter().map(|s| s.train_loss).collect(),
            std::fs::read(path).unwrap(),
        )
    };
    let (losses_a, ckpt_a) = train_once(&dir.path().join("a.ckpt"));
    let (losses_b, ckpt_b) = train_once(&dir.path().join("b.ckpt"));
    assert_eq!(ckpt_a, ckpt_b, "checkpoint bytes differ between runs");
    for (a, b) in losses_a.iter().zip(&losses_b) {
        assert_eq!(a.to_bits(), b.to_bits(), "loss curves differ");
    }

    // eval-mode forward and report bytes
    let (params, _) =
        trialmine::model::load_checkpoint(&dir.path().join("a.ckpt")).unwrap();
    let fwd_a = trialmine::model::forward_batch(&params, &encoded[..8]).unwrap();
    let fwd_b = trialmine::model::forward_batch(&params, &encoded[..8]).unwrap();
    for (x, y) in fwd_a.h_cls.data.iter().zip(&fwd_b.h_cls.data) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let ft = generate_finetune(&config, 3, 60);
    let csv = dir.path().join("preds.csv");
    let write_preds = || {
        let enc: Vec<EncodedInstance> =
            ft.iter().map(|i| encode_finetune(&tokenizer, i, &opts)).collect();
        let (preds, probs) = predict_result(&params, &enc).unwrap();
        let records: Vec<trialmine::eval::PredictionRecord> = ft
            .iter()
            .enumerate()
            .map(|(i, inst)| trialmine::eval::PredictionRecord {
                id: format!("{i:06}"),
                gold: inst.result,
                pred: ResultLabel::from_index(preds[i]).unwrap(),
                p_up: probs.get(i, 0),
                p_nodiff: probs.get(i, 1),
                p_down: probs.get(i, 2),
            })
            .collect();
        trialmine::eval::write_prediction_csv(&csv, &records).unwrap();
        std::fs::read(&csv).unwrap()
    };
    let preds_a = write_preds();
    let preds_b = write_preds();
    assert_eq!(preds_a, preds_b, "prediction bytes differ");

    let entries = vec![trialmine::eval::SystemEntry {
        name: "model".into(),
        standard: Some(csv.clone()),
        adversarial: None,
    }];
    let report_a = serde_json::to_vec(&trialmine::eval::evaluation_report(&entries)).unwrap();
    let report_b = serde_json::to_vec(&trialmine::eval::evaluation_report(&entries)).unwrap();
    assert_eq!(report_a, report_b, "report bytes differ");

    pass(
        "C12 determinism: dataset, checkpoint, loss-curve, forward, prediction and report \
         bytes identical across repeated seeded runs",
    );
}
