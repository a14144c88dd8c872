//! End-to-end flows across modules: adjudication feeding training, model
//! serialization round trips with bit-exact predictions, and the synth →
//! corpus-prep → train → correlate path over real files.

use std::collections::BTreeMap;

use adappeal_core::annotation::{
    adjudicate, read_gold, write_gold, AnnotatorRecord, GoldDocument, SpanAnnotation,
};
use adappeal_core::aspects::{AspectConfig, DocClassifierModel, SpanTaggerModel};
use adappeal_core::corpus::{load_ads, write_ads};
use adappeal_core::ctr::{prepare_examples, train_ctr, AspectProvider, CtrConfig, CtrModel};
use adappeal_core::encoder::{EncoderConfig, TokenMode};
use adappeal_core::eval::{evaluate_doc_model, evaluate_span_model, EvalMode};
use adappeal_core::analytics::correlate;
use adappeal_core::model_io::{load_model, save_model, AnyModel};
use adappeal_core::synth::{generate, SynthConfig};
use adappeal_core::train::{train_doc_model, train_span_model, TrainConfig};

fn small_encoder(mode: TokenMode) -> EncoderConfig {
    let mut enc = EncoderConfig::new(mode, 16);
    enc.buckets = 1 << 10;
    enc
}

fn annotator(doc_id: &str, annotator_id: &str, spans: &[(usize, usize, u8)]) -> AnnotatorRecord {
    AnnotatorRecord {
        doc_id: doc_id.to_string(),
        annotator_id: annotator_id.to_string(),
        spans: spans
            .iter()
            .map(|&(s, e, l)| SpanAnnotation::new(s, e, [l]).unwrap())
            .collect(),
    }
}

/// Three annotators per document, majority consensus, then a few epochs of
/// doc training on the adjudicated output.
#[test]
fn adjudicated_annotations_train_a_doc_model() {
    let texts = [
        ("d1", "free delivery on every order today"),
        ("d2", "premium quality parts built to last"),
        ("d3", "free returns and free samples"),
        ("d4", "top quality finish on all models"),
    ];
    let majority_label = |text: &str| if text.contains("free") { 4u8 } else { 7u8 };

    let mut gold = Vec::new();
    for (doc_id, text) in texts {
        let label = majority_label(text);
        let records = vec![
            annotator(doc_id, "a1", &[(0, 12, label)]),
            annotator(doc_id, "a2", &[(0, 12, label)]),
            annotator(doc_id, "a3", &[(2, 9, 20)]), // outvoted
        ];
        let spans = adjudicate(&records).unwrap();
        assert_eq!(spans.len(), 1, "{doc_id}: majority span survives");
        assert_eq!(spans[0].labels, vec![label]);
        gold.push(GoldDocument {
            doc_id: doc_id.to_string(),
            text: text.to_string(),
            spans,
            industry: "EC".to_string(),
        });
    }

    let mut model = DocClassifierModel::init(AspectConfig::new(small_encoder(TokenMode::Char)), 5);
    let mut config = TrainConfig::doc();
    config.seed = 5;
    config.lr = 5.0;
    config.batch_size = 1;
    config.max_epochs = 200;
    config.patience = 200;
    let log = train_doc_model(&mut model, &gold, &gold, &config).unwrap();
    assert!(!log.epochs.is_empty());

    let report = evaluate_doc_model(&model, &gold).unwrap();
    assert!(
        report.micro_f1 > 0.9,
        "tiny training run should fit four docs, micro {}",
        report.micro_f1
    );
}

/// Gold files written to disk come back equal, and the doc-level label
/// union matches the span sets.
#[test]
fn gold_file_round_trip_preserves_documents() {
    let dir = tempdir();
    let docs = vec![GoldDocument {
        doc_id: "g1".to_string(),
        text: "limited time offer ends soon".to_string(),
        spans: vec![
            SpanAnnotation::new(0, 12, [13]).unwrap(),
            SpanAnnotation::new(19, 28, [12, 13]).unwrap(),
        ],
        industry: "Travel".to_string(),
    }];
    let path = dir.join("gold.jsonl");
    write_gold(&path, &docs).unwrap();
    let back = read_gold(&path).unwrap();
    assert_eq!(back, docs);
    let bits = back[0].doc_labels();
    assert_eq!(bits.indices_at(0.5), vec![12, 13]);
}

/// A trained span model survives save/load with byte-identical prediction
/// output, including probabilities.
#[test]
fn span_model_reload_is_bit_exact() {
    let mut config = SynthConfig::default_detection();
    config.n_docs = 150;
    let output = generate(&config, 11).unwrap();

    let mut model = SpanTaggerModel::init(AspectConfig::new(small_encoder(TokenMode::Word)), 11);
    let mut tc = TrainConfig::span();
    tc.seed = 11;
    tc.max_epochs = 2;
    train_span_model(&mut model, &output.gold, &output.gold, &tc).unwrap();

    let dir = tempdir();
    let path = dir.join("span.json");
    save_model(&path, &AnyModel::Span(model.clone())).unwrap();
    let loaded = match load_model(&path).unwrap() {
        AnyModel::Span(m) => m,
        other => panic!("expected a span model, got {}", other.kind()),
    };
    assert_eq!(loaded, model);

    for doc in output.gold.iter().take(25) {
        let before = model.predict(&doc.text).unwrap();
        let after = loaded.predict(&doc.text).unwrap();
        assert_eq!(before.len(), after.len());
        for (b, a) in before.iter().zip(&after) {
            assert_eq!((b.start, b.end), (a.start, a.end));
            assert_eq!(b.labels.len(), a.labels.len());
            for ((bl, bp), (al, ap)) in b.labels.iter().zip(&a.labels) {
                assert_eq!(bl, al);
                assert_eq!(bp.to_bits(), ap.to_bits(), "probability drifted on reload");
            }
        }
    }

    // Oracle-boundary scoring still works on the reloaded model.
    let orig = evaluate_span_model(&model, &output.gold, EvalMode::Oracle).unwrap();
    let re = evaluate_span_model(&loaded, &output.gold, EvalMode::Oracle).unwrap();
    assert_eq!(orig.macro_f1, re.macro_f1);
}

/// A CTR model keeps its embedded aspect provider across save/load and
/// predicts identically.
#[test]
fn ctr_model_reload_keeps_provider_and_predictions() {
    let mut config = SynthConfig::default_ctr();
    config.n_docs = 200;
    let output = generate(&config, 12).unwrap();

    let mut doc_model =
        DocClassifierModel::init(AspectConfig::new(small_encoder(TokenMode::Word)), 12);
    let mut dc = TrainConfig::doc();
    dc.seed = 12;
    dc.max_epochs = 2;
    train_doc_model(&mut doc_model, &output.gold, &output.gold, &dc).unwrap();

    let provider = AspectProvider::Doc { model: doc_model };
    let (examples, dropped) = prepare_examples(&output.ads, &provider).unwrap();
    assert_eq!(dropped, 0);

    let mut ctr_config = CtrConfig::new(small_encoder(TokenMode::Char));
    ctr_config.ad_dim = 8;
    ctr_config.aspect_dim = 8;
    let mut model = CtrModel::init(ctr_config, provider, 12);
    let mut tc = TrainConfig::ctr();
    tc.seed = 12;
    tc.max_epochs = 2;
    train_ctr(&mut model, &examples, &examples, &tc).unwrap();

    let dir = tempdir();
    let path = dir.join("ctr.json");
    save_model(&path, &AnyModel::Ctr(model.clone())).unwrap();
    let loaded = match load_model(&path).unwrap() {
        AnyModel::Ctr(m) => m,
        other => panic!("expected a ctr model, got {}", other.kind()),
    };
    assert_eq!(loaded, model);
    for ex in examples.iter().take(40) {
        let before = model.predict(ex).unwrap();
        let after = loaded.predict(ex).unwrap();
        assert_eq!(before.to_bits(), after.to_bits());
    }
}

/// Synth ads written to disk, loaded back, prepped, and pushed through
/// training and per-industry correlation.
#[test]
fn synth_corpus_flows_through_prep_training_and_correlation() {
    let mut config = SynthConfig::default_detection();
    config.n_docs = 600;
    let output = generate(&config, 13).unwrap();

    let dir = tempdir();
    let ads_path = dir.join("ads.jsonl");
    write_ads(&ads_path, &output.ads).unwrap();
    let report = load_ads(&ads_path).unwrap();
    assert!(report.rejects.is_empty());
    assert_eq!(report.corpus.records, output.ads.records);

    // Prep: per-advertiser cap, length filter, dedup.
    let prepped = report
        .corpus
        .sample_per_advertiser(50, 13)
        .filter_length(10, 400)
        .dedup(0.05);
    assert!(!prepped.records.is_empty());
    assert!(prepped.records.len() <= report.corpus.records.len());

    let (train_ads, dev_ads, test_ads) = prepped
        .split_by_campaign((0.6, 0.2, 0.2), 13)
        .unwrap();
    assert!(!train_ads.records.is_empty());
    assert!(!dev_ads.records.is_empty());
    assert!(!test_ads.records.is_empty());

    let by_id: BTreeMap<&str, &GoldDocument> = output
        .gold
        .iter()
        .map(|d| (d.doc_id.as_str(), d))
        .collect();
    let train_gold: Vec<GoldDocument> = train_ads
        .records
        .iter()
        .filter_map(|r| by_id.get(r.id.as_str()).map(|d| (*d).clone()))
        .collect();
    let dev_gold: Vec<GoldDocument> = dev_ads
        .records
        .iter()
        .filter_map(|r| by_id.get(r.id.as_str()).map(|d| (*d).clone()))
        .collect();
    assert_eq!(train_gold.len(), train_ads.records.len());

    let mut model = DocClassifierModel::init(AspectConfig::new(small_encoder(TokenMode::Word)), 13);
    let mut tc = TrainConfig::doc();
    tc.seed = 13;
    tc.lr = 3.0;
    tc.max_epochs = 5;
    train_doc_model(&mut model, &train_gold, &dev_gold, &tc).unwrap();

    // Correlate model predictions against CTR over the full prepped corpus.
    let mut preds = Vec::new();
    for ad in &prepped.records {
        let p = model.predict(&ad.text()).unwrap();
        preds.push((ad.id.clone(), p.probs.binarize(0.5)));
    }
    let corr = correlate(&prepped, &preds, 20).unwrap();
    assert!(!corr.industries.is_empty());
    for column in &corr.industries {
        assert!(config.industries.iter().any(|i| i.name == column.industry));
        assert_eq!(column.cells.len(), 21);
    }

    let csv = corr.to_csv();
    let header_cols = csv.lines().next().unwrap().split(',').count();
    assert_eq!(header_cols, corr.industries.len() + 1);
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "adappeal-pipeline-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
