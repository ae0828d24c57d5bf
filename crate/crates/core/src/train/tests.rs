use super::*;
use crate::corpus::{split_corpus, synthesize_corpus, SynthConfig};

fn tiny_sets(
    seed: u64,
) -> (
    Vec<TrainExample>,
    Vec<TrainExample>,
    Vocabulary,
    ModelConfig,
) {
    let vocab = Vocabulary::desk();
    let sc = SynthConfig {
        num_positive: 16,
        num_negative: 16,
        seed,
        ..SynthConfig::default()
    };
    let recs = synthesize_corpus(&sc, &vocab).unwrap();
    let (train, valid, _) = split_corpus(recs, 0.25, 0.0).unwrap();
    let mc = ModelConfig::desk(sc.base_dim, vocab.len());
    let tr = prepare_examples(&train, &vocab, &mc, &Task::Kws).unwrap();
    let va = prepare_examples(&valid, &vocab, &mc, &Task::Kws).unwrap();
    (tr, va, vocab, mc)
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        max_steps: steps,
        eval_every: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn sampler_covers_each_epoch_once() {
    let mut s = BatchSampler::new(10, 3, 5);
    let mut seen: Vec<usize> = Vec::new();
    for _ in 0..10 {
        let b = s.next_batch();
        assert_eq!(b.len(), 3);
        seen.extend(b);
    }
    for epoch in seen.chunks(10) {
        let mut e = epoch.to_vec();
        e.sort();
        assert_eq!(e, (0..10).collect::<Vec<_>>());
    }
    let mut again = BatchSampler::new(10, 3, 5);
    let replay: Vec<usize> = (0..10).flat_map(|_| again.next_batch()).collect();
    assert_eq!(seen, replay);
    assert_ne!(
        BatchSampler::new(10, 3, 6).next_batch(),
        BatchSampler::new(10, 3, 5).next_batch()
    );
    assert_eq!(BatchSampler::new(2, 5, 1).next_batch().len(), 2);
}

#[test]
fn selection_prefers_the_later_step_on_ties() {
    let log = vec![
        MetricRow::valid(0, Stage::Rnnt, "eer", 0.3),
        MetricRow::train(1, Stage::Rnnt, 2.0),
        MetricRow::valid(2, Stage::Rnnt, "eer", 0.1),
        MetricRow::valid(2, Stage::Rnnt, "valid_loss", 0.01),
        MetricRow::valid(4, Stage::Rnnt, "eer", 0.1),
        MetricRow::valid(6, Stage::Rnnt, "eer", 0.2),
    ];
    assert_eq!(select_best(&log, "eer"), Some((4, 0.1)));
    assert_eq!(select_best(&log, "fn_at_1pct_fp"), None);
}

#[test]
fn zero_steps_returns_the_initialization() {
    let (tr, va, vocab, mc) = tiny_sets(1);
    let cfg = short(0);
    let out = train_rnnt(&mc, &tr, &va, &vocab, &cfg).unwrap();
    assert_eq!(out.best, init_params(&mc, cfg.seed).unwrap());
    assert_eq!(out.best_step, 0);
    assert_eq!(out.log.len(), 2);
    assert!(out
        .log
        .iter()
        .all(|r| r.step == 0 && r.train_loss.is_none()));
}

#[test]
fn runs_are_deterministic_and_selection_matches_the_log() {
    let (tr, va, vocab, mc) = tiny_sets(2);
    let cfg = short(6);
    let a = train_rnnt(&mc, &tr, &va, &vocab, &cfg).unwrap();
    let b = train_rnnt(&mc, &tr, &va, &vocab, &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.best, b.best);
    assert_eq!(a.last, b.last);
    assert_eq!(
        select_best(&a.log, "eer"),
        Some((a.best_step, a.best_metric))
    );
    let train_rows = a.log.iter().filter(|r| r.train_loss.is_some()).count();
    assert_eq!(train_rows, 6);
    // evaluated at 0, 2, 4, 6 with two rows each
    assert_eq!(a.log.len() - train_rows, 8);
}

#[test]
fn metric_logs_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let log = vec![
        MetricRow::valid(0, Stage::Mbr, "fn_at_1pct_fp", 0.25),
        MetricRow::train(1, Stage::Mbr, 1.5),
    ];
    let p = dir.path().join("log.csv");
    write_metric_log(&log, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("step,stage,train_loss,valid_metric_name,valid_metric_value\n"));
    assert!(text.contains("1,mbr,1.5,,\n"));
    assert_eq!(read_metric_log(&p).unwrap(), log);

    let rows = vec![MbrRow {
        step: 1,
        mbr_term: 0.5,
        rnnt_term: 10.0,
        total: 0.6,
    }];
    let p = dir.path().join("mbr.csv");
    write_mbr_log(&rows, &p).unwrap();
    assert!(std::fs::read_to_string(&p)
        .unwrap()
        .starts_with("step,mbr_term,rnnt_term,total\n"));
    assert_eq!(read_mbr_log(&p).unwrap(), rows);
}

#[test]
fn overlapping_sets_are_rejected() {
    let (tr, _, vocab, mc) = tiny_sets(3);
    let err = train_rnnt(&mc, &tr, &tr[..2], &vocab, &short(1)).unwrap_err();
    assert!(err.to_string().contains("both"));
    assert!(train_rnnt(&mc, &tr, &[], &vocab, &short(1)).is_err());
    assert!(TrainConfig {
        batch_size: 0,
        ..short(1)
    }
    .validate()
    .is_err());
}

#[test]
fn risk_free_mbr_reduces_to_transducer_training() {
    let (tr, va, vocab, mc) = tiny_sets(4);
    let cfg = short(5);
    let base = train_rnnt(&mc, &tr, &va, &vocab, &cfg).unwrap();
    let warm = init_params(&mc, cfg.seed).unwrap();
    let mbr = MbrConfig {
        alpha: 0.0,
        beta: 0.0,
        lambda: 1.0,
        beam: 2,
        n_best: 2,
        ..MbrConfig::default()
    };
    let ft = run_mbr_finetune(warm, &tr, &va, &vocab, &cfg, &mbr).unwrap();
    let rnnt_losses: Vec<f64> = base.log.iter().filter_map(|r| r.train_loss).collect();
    assert_eq!(ft.mbr_log.len(), rnnt_losses.len());
    for (row, l) in ft.mbr_log.iter().zip(&rnnt_losses) {
        assert_eq!(row.mbr_term, 0.0);
        let mean = row.rnnt_term / cfg.batch_size as f64;
        assert!((mean - l).abs() < 1e-6, "step {}: {mean} vs {l}", row.step);
        assert_eq!(row.total, row.rnnt_term);
    }
}

#[test]
fn mbr_gradient_without_risk_is_lambda_times_transducer_gradient() {
    let (tr, _, vocab, mc) = tiny_sets(5);
    let params = init_params(&mc, 3).unwrap();
    let batch: Vec<&TrainExample> = tr.iter().take(3).collect();
    let mbr = MbrConfig {
        alpha: 0.0,
        beta: 0.0,
        lambda: 0.37,
        ..MbrConfig::default()
    };
    let (b, g) = crate::mbr::mbr_batch_gradient(&params, &batch, &vocab, &mbr, 0).unwrap();
    let (mean, mut g_ref) = rnnt_batch_gradient(&params, &batch, 0).unwrap();
    g_ref.scale(mbr.lambda * batch.len() as f64);
    assert!((b.rnnt_term - mean * batch.len() as f64).abs() < 1e-9);
    for (x, y) in g.tensors().iter().zip(g_ref.tensors().iter()) {
        for (a, c) in x.data.iter().zip(y.data) {
            assert!((a - c).abs() < 1e-9);
        }
    }
}

#[test]
fn risk_free_step_without_regularizer_leaves_parameters() {
    let (tr, _, vocab, mc) = tiny_sets(6);
    let mut params = init_params(&mc, 3).unwrap();
    let before = params.clone();
    let batch: Vec<&TrainExample> = tr.iter().take(2).collect();
    let mbr = MbrConfig {
        alpha: 0.0,
        beta: 0.0,
        lambda: 0.0,
        ..MbrConfig::default()
    };
    let mut opt = Adam::new(&params, 1e-3, 0.9, 0.999, 1e-8);
    let b = crate::mbr::mbr_finetune_step(&mut params, &mut opt, &batch, &vocab, &mbr, 0).unwrap();
    assert_eq!(b.total, 0.0);
    assert_eq!(params, before);
}

#[test]
fn asr_examples_use_verbatim_text() {
    let vocab = Vocabulary::desk();
    let sc = SynthConfig {
        num_positive: 4,
        num_negative: 0,
        ..SynthConfig::default()
    };
    let recs = synthesize_corpus(&sc, &vocab).unwrap();
    let mc = ModelConfig::desk(sc.base_dim, vocab.len());
    let task = Task::Asr {
        keywords: sc.keyword_phrases.clone(),
    };
    let ex = prepare_examples(&recs, &vocab, &mc, &task).unwrap();
    for (e, r) in ex.iter().zip(&recs) {
        assert!(!e.tokens.contains(&vocab.kw_token_id()));
        assert_eq!(vocab.detokenize(&e.tokens).unwrap(), r.verbatim);
    }
}
