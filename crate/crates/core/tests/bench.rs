//! Benchmark runs over generated corpora.

mod common;

use common::{build_corpus, diagonal_shift, write_gray, Corpus, Output};
use motionscore::bench::{
    dataset_motion_stats, load_external_scores, load_manifest, parse_weights, run_benchmark, BenchOptions, Report,
};
use motionscore::config::Settings;
use motionscore::synth::Texture;
use motionscore::Estimator;

const SIZE: usize = 64;

fn corpus(dir: &std::path::Path, n: usize) -> Corpus {
    build_corpus(
        dir,
        n,
        SIZE,
        (24.0, 64.0),
        diagonal_shift(SIZE, 0.06),
        &[
            ("copy-gt", Output::CopyGt),
            ("copy-input", Output::CopyInput),
            ("half", Output::Partial(0.5)),
        ],
    )
}

fn bench(corpus: &Corpus, opts: &BenchOptions) -> Report {
    let manifest = load_manifest(&corpus.manifest).unwrap();
    run_benchmark(&manifest, &Settings::default(), opts).unwrap()
}

fn all_models(corpus: &Corpus) -> BenchOptions {
    BenchOptions::all_models(&load_manifest(&corpus.manifest).unwrap())
}

#[test]
fn ground_truth_copy_wins_every_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let report = {
        let c = corpus(dir.path(), 6);
        bench(&c, &all_models(&c))
    };
    let summary = |m: &str| report.models.iter().find(|s| s.model == m).unwrap();

    let best = summary("copy-gt");
    assert!((best.mean_mas - 100.0).abs() < 0.01, "{}", best.mean_mas);
    assert_eq!(best.mean_r_motion, 1.0);
    assert_eq!(best.static_failure_rate, 0.0);

    let still = summary("copy-input");
    assert_eq!(still.mean_mas, 0.0);
    assert_eq!(still.static_failure_rate, 1.0);

    let half = summary("half");
    assert!(half.mean_mas > still.mean_mas && half.mean_mas < best.mean_mas);

    let w = report.win_rate.as_ref().unwrap();
    assert_eq!(report.win_rate_basis, "mas");
    assert_eq!(w.wins_of("copy-gt", "copy-input"), Some(100.0));
    assert_eq!(w.wins_of("copy-gt", "half"), Some(100.0));
    assert_eq!(w.wins_of("copy-input", "copy-gt"), Some(0.0));
}

#[test]
fn category_means_recombine_to_overall_mean() {
    let dir = tempfile::tempdir().unwrap();
    let report = {
        let c = corpus(dir.path(), 8);
        bench(&c, &all_models(&c))
    };
    for m in &report.models {
        let count: usize = m.categories.values().map(|c| c.count).sum();
        let weighted: f64 = m.categories.values().map(|c| c.count as f64 * c.mean_mas).sum::<f64>() / count as f64;
        assert_eq!(count, m.count);
        assert!(
            (weighted - m.mean_mas).abs() < 1e-9,
            "{}: {weighted} vs {}",
            m.model,
            m.mean_mas
        );
    }
}

#[test]
fn corrupt_output_only_fails_its_own_entry() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 4);
    std::fs::write(c.dir.join("e002_half.png"), b"not a png").unwrap();
    let report = bench(&c, &all_models(&c));

    let failed: Vec<_> = report.entries.iter().filter(|r| r.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(
        (failed[0].entry_id.as_str(), failed[0].model.as_str()),
        ("e002", "half")
    );
    let half = report.models.iter().find(|s| s.model == "half").unwrap();
    assert_eq!((half.count, half.failures), (3, 1));
    // the failed pair drops out of the head-to-head counts
    let w = report.win_rate.unwrap();
    let (gt, h) = (w.index("copy-gt").unwrap(), w.index("half").unwrap());
    assert_eq!(w.compared[gt][h], 3);
}

#[test]
fn single_model_reports_win_rate_error() {
    let dir = tempfile::tempdir().unwrap();
    let opts = BenchOptions {
        models: vec!["copy-gt".into()],
        ..Default::default()
    };
    let report = bench(&corpus(dir.path(), 2), &opts);
    assert!(report.win_rate.is_none());
    assert!(report.win_rate_error.is_some());
    assert_eq!(report.models.len(), 1);
}

#[test]
fn external_scores_switch_basis_to_combined() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 3);
    let mut lines = Vec::new();
    for i in 0..3 {
        for (model, value) in [("copy-gt", 0.2), ("copy-input", 1.0), ("half", 0.5)] {
            lines.push(format!(
                r#"{{"entry_id":"e{i:03}","model":"{model}","name":"mllm","value":{value}}}"#
            ));
        }
    }
    let sidecar = c.dir.join("external.jsonl");
    std::fs::write(&sidecar, lines.join("\n")).unwrap();
    let opts = BenchOptions {
        external: Some(load_external_scores(&sidecar).unwrap()),
        weights: Some(parse_weights("motion=0.5,mllm=0.5").unwrap()),
        ..all_models(&c)
    };
    let report = bench(&c, &opts);
    assert_eq!(report.win_rate_basis, "combined");
    let combined = |m: &str| {
        report
            .models
            .iter()
            .find(|s| s.model == m)
            .unwrap()
            .mean_combined
            .unwrap()
    };
    assert!((combined("copy-gt") - 0.6).abs() < 1e-12);
    // a static edit keeps some reward, so the external score decides this pair
    let still = combined("copy-input");
    assert!(still > 0.5 && still <= 1.0);
}

#[test]
fn empty_model_list_still_emits_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let report = bench(&corpus(dir.path(), 2), &BenchOptions::default());
    assert!(report.models.is_empty() && report.entries.is_empty());
    assert!(report.win_rate_error.unwrap().contains('0'));
}

#[test]
fn bad_weights_are_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 1);
    let manifest = load_manifest(&c.manifest).unwrap();
    let opts = BenchOptions {
        external: Some(Default::default()),
        weights: Some(parse_weights("motion=0.5,mllm=0.6").unwrap()),
        ..Default::default()
    };
    assert!(run_benchmark(&manifest, &Settings::default(), &opts).is_err());
}

#[test]
fn resized_outputs_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 2);
    let (dx, dy) = c.shifts[1];
    let big = Texture::with_wavelengths(1001, 24.0, 64.0).render(2 * SIZE, 2 * SIZE, 2.0 * dx, 2.0 * dy);
    write_gray(&c.dir.join("e001_copy-gt.png"), &big);
    let report = bench(
        &c,
        &BenchOptions {
            models: vec!["copy-gt".into()],
            ..Default::default()
        },
    );
    let flags: Vec<bool> = report
        .entries
        .iter()
        .map(|r| r.score.as_ref().unwrap().resized)
        .collect();
    assert_eq!(flags, vec![false, true]);
}

#[test]
fn csv_has_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let report = {
        let c = corpus(dir.path(), 2);
        bench(&c, &all_models(&c))
    };
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "entry_id,model,category,r_motion,d_mag,d_dir,m_move,mas,static_failure,errors"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn report_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = {
        let c = corpus(dir.path(), 2);
        bench(&c, &all_models(&c))
    };
    let back: Report = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn static_corpus_has_no_motion() {
    let dir = tempfile::tempdir().unwrap();
    let c = build_corpus(dir.path(), 10, SIZE, (16.0, 48.0), |_| (0.0, 0.0), &[]);
    let stats = dataset_motion_stats(&load_manifest(&c.manifest).unwrap(), &Estimator::default(), 100, 0);
    assert_eq!(stats.per_entry.len(), 10);
    assert!(stats.mean < 1e-3, "{}", stats.mean);
}
