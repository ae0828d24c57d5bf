use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn kwspot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwspot"))
        .args(args)
        .env("KWSPOT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kwspot(args);
    assert!(
        out.status.success(),
        "kwspot {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn write_scores(path: &str, system: &str, rows: &[(&str, &str, f64)]) {
    let mut s = String::from("utt_id,polarity,score,system\n");
    for (id, pol, score) in rows {
        s.push_str(&format!("{id},{pol},{score},{system}\n"));
    }
    std::fs::write(path, s).unwrap();
}

const SIX: [(&str, &str, f64); 6] = [
    ("u1", "positive", 0.9),
    ("u2", "positive", 0.8),
    ("u3", "positive", 0.4),
    ("u4", "negative", 0.7),
    ("u5", "negative", 0.3),
    ("u6", "negative", 0.2),
];

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "synth-data",
        "train",
        "mbr-finetune",
        "decode",
        "score",
        "eval",
        "fuse",
        "det",
    ] {
        let out = ok(&[sub, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--config"), "{sub}: {text}");
        assert!(text.contains("Usage"), "{sub}");
    }
    let out = ok(&["train", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--max-steps",
        "--learning-rate",
        "--dense2-dim",
        "[default: 0.002]",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let out = ok(&["mbr-finetune", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--lambda", "--n-best", "--denominator", "[default: 1e-5]"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn eval_reports_hand_computed_rates() {
    let dir = TempDir::new().unwrap();
    let scores = p(dir.path(), "s.csv");
    let report = p(dir.path(), "r.csv");
    write_scores(&scores, "hand", &SIX);
    let out = ok(&["eval", "--scores", &scores, "--report", &report]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("system,eer,"), "{stdout}");
    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("system,eer,fn_at_1pct_fp,fn_at_0.5pct_fp")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "hand");
    let eer: f64 = row[1].parse().unwrap();
    assert!((eer - 1.0 / 3.0).abs() < 1e-12, "eer {eer}");
    let fn1: f64 = row[2].parse().unwrap();
    assert!((fn1 - 1.0 / 3.0).abs() < 1e-12, "fn@1% {fn1}");
}

#[test]
fn fuse_sums_and_det_writes_curve() {
    let dir = TempDir::new().unwrap();
    let a = p(dir.path(), "a.csv");
    let b = p(dir.path(), "b.csv");
    write_scores(&a, "a", &SIX);
    let shifted: Vec<_> = SIX.iter().map(|&(id, pol, s)| (id, pol, 1.0 - s)).collect();
    write_scores(&b, "b", &shifted);
    let fused = p(dir.path(), "f.csv");
    ok(&["fuse", "--scores", &a, "--scores", &b, "--out", &fused]);
    let text = std::fs::read_to_string(&fused).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let s: f64 = cols[2].parse().unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{row}");
        assert_eq!(cols[3], "fused");
    }

    let det = p(dir.path(), "det.csv");
    let svg = p(dir.path(), "det.svg");
    ok(&["det", "--scores", &a, "--out", &det, "--svg", &svg]);
    let det_text = std::fs::read_to_string(&det).unwrap();
    assert!(
        det_text.starts_with("threshold,fp_rate,fn_rate\ninf,0.0,1.0\n"),
        "{det_text}"
    );
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn unknown_config_key_names_key_and_line() {
    let dir = TempDir::new().unwrap();
    let cfg = p(dir.path(), "k.toml");
    std::fs::write(
        &cfg,
        "[eval]\nreport = \"x.csv\"\n\n[train]\nmax-steps = 3\nmax-stpes = 4\n",
    )
    .unwrap();
    let out = kwspot(&["--config", &cfg, "eval"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("k.toml:6:"), "{err}");
    assert!(err.contains("max-stpes"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let scores = p(dir.path(), "s.csv");
    write_scores(&scores, "hand", &SIX);
    let from_file = p(dir.path(), "file.csv");
    let from_flag = p(dir.path(), "flag.csv");
    let cfg = p(dir.path(), "c.toml");
    std::fs::write(
        &cfg,
        format!("[eval]\nscores = [{scores:?}]\nreport = {from_file:?}\n"),
    )
    .unwrap();
    ok(&["--config", &cfg, "eval"]);
    assert!(Path::new(&from_file).exists());
    ok(&["--config", &cfg, "eval", "--report", &from_flag]);
    assert!(Path::new(&from_flag).exists());
    assert_eq!(
        std::fs::read_to_string(&from_file).unwrap(),
        std::fs::read_to_string(&from_flag).unwrap()
    );
}

#[test]
fn missing_inputs_fail_with_one_line() {
    let out = kwspot(&["eval"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--scores"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let out = kwspot(&[
        "det",
        "--scores",
        "/nonexistent/s.csv",
        "--out",
        "/tmp/never.csv",
    ]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}

#[test]
fn pipeline_runs_end_to_end_and_repeats_exactly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = p(d, "data");
    ok(&[
        "synth-data",
        "--out-dir",
        &data,
        "--num-positive",
        "30",
        "--num-negative",
        "30",
        "--confusable-fraction",
        "0.3",
        "--seed",
        "5",
    ]);
    let train = format!("{data}/train.jsonl");
    let valid = format!("{data}/valid.jsonl");
    let test = format!("{data}/test.jsonl");
    for f in [&train, &valid, &test] {
        assert!(Path::new(f).exists());
    }
    let run = |tag: &str| {
        let model = p(d, &format!("kws{tag}.ckpt"));
        let log = p(d, &format!("log{tag}.csv"));
        ok(&[
            "--jobs",
            "2",
            "train",
            "--train",
            &train,
            "--valid",
            &valid,
            "--out",
            &model,
            "--log",
            &log,
            "--max-steps",
            "6",
            "--eval-every",
            "3",
            "--batch-size",
            "4",
        ]);
        let scores = p(d, &format!("scores{tag}.csv"));
        ok(&[
            "score", "--model", &model, "--data", &test, "--out", &scores,
        ]);
        (model, log, scores)
    };
    let (model, log, scores) = run("1");
    let (model2, _, scores2) = run("2");
    assert_eq!(
        std::fs::read(&model).unwrap(),
        std::fs::read(&model2).unwrap()
    );
    assert_eq!(
        std::fs::read(&scores).unwrap(),
        std::fs::read(&scores2).unwrap()
    );
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.contains("eer"), "{log_text}");

    let tuned = p(d, "mbr.ckpt");
    let mbr_log = p(d, "mbr.csv");
    ok(&[
        "mbr-finetune",
        "--warm",
        &model,
        "--train",
        &train,
        "--valid",
        &valid,
        "--out",
        &tuned,
        "--mbr-log",
        &mbr_log,
        "--max-steps",
        "2",
        "--eval-every",
        "1",
        "--batch-size",
        "3",
        "--beam",
        "3",
        "--n-best",
        "2",
    ]);
    let mbr_text = std::fs::read_to_string(&mbr_log).unwrap();
    assert!(
        mbr_text.starts_with("step,mbr_term,rnnt_term,total\n"),
        "{mbr_text}"
    );
    assert_eq!(mbr_text.lines().count(), 3);

    let nbest = p(d, "nbest.jsonl");
    ok(&[
        "decode", "--model", &tuned, "--data", &test, "--out", &nbest, "--beam", "4", "--n-best",
        "2",
    ]);
    let first = std::fs::read_to_string(&nbest).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(line["rank"], 1);
    assert!(line["log_prob"].as_f64().unwrap() <= 0.0);

    let asr = p(d, "asr.ckpt");
    ok(&[
        "train",
        "--mode",
        "asr",
        "--train",
        &train,
        "--valid",
        &valid,
        "--out",
        &asr,
        "--max-steps",
        "3",
        "--batch-size",
        "4",
    ]);
    let asr_scores = p(d, "asr.csv");
    ok(&[
        "score",
        "--model",
        &asr,
        "--data",
        &test,
        "--out",
        &asr_scores,
        "--method",
        "bigram",
    ]);
    let fused = p(d, "fused.csv");
    ok(&[
        "fuse",
        "--scores",
        &scores,
        "--scores",
        &asr_scores,
        "--out",
        &fused,
    ]);
    let report = p(d, "report.csv");
    let out = ok(&[
        "eval",
        "--scores",
        &scores,
        "--scores",
        &asr_scores,
        "--scores",
        &fused,
        "--report",
        &report,
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for system in ["tt-kws", "asr-bigram", "fused"] {
        assert!(stdout.contains(system), "{stdout}");
    }
}
