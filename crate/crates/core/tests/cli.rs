use std::path::Path;
use std::process::{Command, Output};

use objectomaly::coarse::QueryOutputs;
use objectomaly::io;
use objectomaly::metrics::{GroundTruth, Label};
use objectomaly::oasc::{InstanceMask, MaskSet};
use objectomaly::{PixelRegion, ScoreMap};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objectomaly"))
        .args(args)
        .current_dir(dir)
        .env_remove("OBJECTOMALY_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixture(dir: &Path) {
    let values: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 80.0 + 0.1).collect();
    io::write_fmap(&ScoreMap::from_vec(8, 8, values).unwrap(), dir.join("c.fmap")).unwrap();
    let region = |r0: usize, c0: usize, n: usize| {
        let px: Vec<_> = (r0..r0 + n).flat_map(|r| (c0..c0 + n).map(move |c| (r, c))).collect();
        PixelRegion::new(px, 8, 8).unwrap()
    };
    let masks = MaskSet::new(
        8,
        8,
        vec![InstanceMask::new(1, region(0, 0, 4)), InstanceMask::new(2, region(2, 2, 3))],
    )
    .unwrap();
    io::write_masks(&masks, dir.join("m.json")).unwrap();
}

#[test]
fn refine_default_applies_both_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    ok(&["refine", "--scores", "c.fmap", "--masks", "m.json", "--out", "r.fmap"], d);
    let out = io::read_fmap(d.join("r.fmap")).unwrap();
    let init = io::read_fmap(d.join("c.fmap")).unwrap();
    assert_eq!(out.dims(), (8, 8));
    assert_ne!(out, init);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["refine"]["stages"]["oasc"], true);
    assert_eq!(meta["refine"]["stages"]["mbp"], true);
    assert_eq!(meta["refine"]["mbp"]["lambda"], 0.5);
}

#[test]
fn refine_without_stages_is_clamped_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let map = ScoreMap::from_vec(3, 1, vec![-0.5, 0.25, 1.5]).unwrap();
    io::write_fmap(&map, d.join("c.fmap")).unwrap();
    ok(&["refine", "--scores", "c.fmap", "--no-oasc", "--no-mbp", "--out", "r.fmap"], d);
    assert_eq!(io::read_fmap(d.join("r.fmap")).unwrap().values(), &[0.0, 0.25, 1.0]);
}

#[test]
fn literal_mode_on_constant_map_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    io::write_fmap(&ScoreMap::new_filled(6, 5, 0.7).unwrap(), d.join("c.fmap")).unwrap();
    ok(
        &[
            "refine", "--scores", "c.fmap", "--no-oasc", "--mbp-mode", "literal", "--sigma", "2.0",
            "--lambda", "0", "--out", "r.fmap",
        ],
        d,
    );
    assert!(io::read_fmap(d.join("r.fmap")).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn refine_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    io::write_fmap(&ScoreMap::new_filled(4, 4, 0.5).unwrap(), d.join("small.fmap")).unwrap();
    std::fs::write(d.join("bad.fmap"), b"FMAP\x02\x00").unwrap();
    let code = |args: &[&str]| run(args, d).status.code();
    assert_eq!(code(&["refine", "--scores", "small.fmap", "--masks", "m.json", "--out", "r.fmap"]), Some(2));
    assert_eq!(code(&["refine", "--scores", "c.fmap", "--out", "r.fmap"]), Some(2));
    assert_eq!(code(&["refine", "--scores", "bad.fmap", "--no-oasc", "--out", "r.fmap"]), Some(3));
    assert_eq!(code(&["refine", "--scores", "missing.fmap", "--no-oasc", "--out", "r.fmap"]), Some(3));
    assert_eq!(code(&["refine", "--bogus"]), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    std::fs::write(d.join("cfg.toml"), "[refine]\nlambda = 0.25\nsigma = 1.5\n").unwrap();
    ok(
        &[
            "refine", "--config", "cfg.toml", "--scores", "c.fmap", "--masks", "m.json", "--sigma", "0.8",
            "--out", "r.fmap",
        ],
        d,
    );
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["refine"]["mbp"]["lambda"], 0.25);
    assert_eq!(meta["refine"]["mbp"]["sigma"], 0.8);

    std::fs::write(d.join("typo.toml"), "[refine]\nlamda = 0.25\n").unwrap();
    let out = run(&["refine", "--config", "typo.toml", "--scores", "c.fmap", "--no-oasc", "--out", "r.fmap"], d);
    assert_eq!(out.status.code(), Some(3));
}

fn four_pixel(dir: &Path, stem: &str) {
    io::write_fmap(
        &ScoreMap::from_vec(4, 1, vec![0.9, 0.8, 0.4, 0.1]).unwrap(),
        dir.join("pred").join(format!("{stem}.fmap")),
    )
    .unwrap();
    let gt = GroundTruth::new(4, 1, vec![Label::Ood, Label::Id, Label::Ood, Label::Id]).unwrap();
    io::write_gt_pgm(&gt, dir.join("gt").join(format!("{stem}.pgm"))).unwrap();
}

#[test]
fn eval_four_pixel_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    four_pixel(d, "a");
    ok(&["eval", "--pred", "pred/a.fmap", "--gt", "gt/a.pgm", "--out", "m"], d);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m/metrics.json")).unwrap()).unwrap();
    let auprc = doc["aggregate"]["auprc"].as_f64().unwrap();
    assert!((auprc - 5.0 / 6.0).abs() < 1e-9);
    assert_eq!(doc["aggregate"]["fpr95"].as_f64().unwrap(), 0.5);
}

#[test]
fn eval_directory_writes_one_row_per_pair_plus_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for stem in ["x1", "x2", "x3"] {
        four_pixel(d, stem);
    }
    ok(&["eval", "--pred", "pred", "--gt", "gt", "--out", "m", "--workers", "2"], d);
    let csv = std::fs::read_to_string(d.join("m/metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("aggregate,"));
}

#[test]
fn eval_perfect_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gt = GroundTruth::new(3, 2, vec![Label::Ood, Label::Id, Label::Ignore, Label::Id, Label::Ood, Label::Id]).unwrap();
    io::write_gt_pgm(&gt, d.join("g.pgm")).unwrap();
    io::write_fmap(&ScoreMap::from_vec(3, 2, vec![1.0, 0.0, 0.3, 0.0, 1.0, 0.0]).unwrap(), d.join("p.fmap")).unwrap();
    ok(&["eval", "--pred", "p.fmap", "--gt", "g.pgm", "--out", "m"], d);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m/metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["aggregate"]["auprc"], 1.0);
}

#[test]
fn eval_unmatched_stems_is_contract_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    four_pixel(d, "a");
    four_pixel(d, "b");
    std::fs::remove_file(d.join("gt/b.pgm")).unwrap();
    let out = run(&["eval", "--pred", "pred", "--gt", "gt", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('b'));
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["synth", "--seed", "7", "--n", "20", "--out", "a"], d);
    ok(&["synth", "--seed", "7", "--n", "20", "--out", "b", "--workers", "3"], d);
    let a = tree(&d.join("a"));
    assert_eq!(a.len(), 20 * 4);
    assert_eq!(a, tree(&d.join("b")));
    assert!(d.join("a/7/coarse.fmap").is_file());
    assert!(d.join("a/26/meta.json").is_file());
}

fn ablation_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn pipeline_without_corruption_is_already_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        &[
            "pipeline", "--out", "p", "--n", "10", "--blur-sigma", "0", "--ramp", "0", "--clutter-count", "0",
            "--noise-sigma", "0",
        ],
        d,
    );
    let rows = ablation_rows(&d.join("p/ablation.csv"));
    assert_eq!(&rows[0][..4], ["stage", "oasc", "mbp", "auprc"]);
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0, "{row:?}");
    }
}

#[test]
fn pipeline_calibration_beats_coarse_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["pipeline", "--out", "p", "--n", "20"], d);
    let rows = ablation_rows(&d.join("p/ablation.csv"));
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["cas", "cas+oasc", "cas+mbp", "cas+oasc+mbp"]);
    let auprc = |i: usize| rows[i][3].parse::<f64>().unwrap();
    let fpr = |i: usize| rows[i][4].parse::<f64>().unwrap();
    assert!(auprc(2) > auprc(1));
    assert!(fpr(2) < fpr(1));
    for row in ["cas", "cas+oasc", "cas+mbp", "cas+oasc+mbp"] {
        assert!(d.join("p/eval").join(row).join("metrics.csv").is_file());
        assert_eq!(std::fs::read_dir(d.join("p/refined").join(row)).unwrap().count(), 20);
    }
}

#[test]
fn score_queries_writes_coarse_map() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let logits = |a: f64, b: f64| vec![a.ln(), b.ln(), (1e-30f64).ln()];
    let q = QueryOutputs::new(
        2,
        vec![logits(0.9, 0.1), logits(0.2, 0.8)],
        vec![
            ScoreMap::from_vec(2, 1, vec![4f64.ln(), -30.0]).unwrap(),
            ScoreMap::from_vec(2, 1, vec![0.0, -30.0]).unwrap(),
        ],
        vec![true, true],
    )
    .unwrap();
    io::write_queries(&q, d.join("q.json")).unwrap();
    ok(&["score-queries", "q.json", "--out", "f.fmap"], d);
    let f = io::read_fmap(d.join("f.fmap")).unwrap();
    assert!((f.values()[0] - 0.18).abs() < 1e-6);
    assert!(f.values()[1] > 0.99);
    assert!(d.join("f.meta.json").is_file());

    // neither query clears the 0.95 gate, so everything is gated off
    ok(&["score-queries", "q.json", "--out", "g.fmap", "--apply-refinement-mask"], d);
    assert_eq!(io::read_fmap(d.join("g.fmap")).unwrap().values(), &[0.0, 0.0]);
}
