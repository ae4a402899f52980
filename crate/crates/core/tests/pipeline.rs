use latentscout::pipeline::{DimSelection, EvidenceOptions, Overrides, Pipeline, PipelineConfig, StageOutcome};
use latentscout::runstore::{layout, RunStatus, RunStore, Verdict};
use latentscout::Error;

fn tiny_config(seed: u64) -> PipelineConfig {
    let text = r#"
        [dataset.synthetic]
        kind = "color"
        n_samples = 80
        image_size = 16
        n_classes = 2
        p_corr = 0.95

        [train]
        latent_dim = 4
        beta = 2.0
        max_epochs = 2
        batch_size = 16
        encoder_channels = [8, 16]
        decoder_channels = [16, 8]

        [probe]
        max_epochs = 20

        [evidence]
        steps = 4
        extremes = 3

        [classifier]
        max_epochs = 1
    "#;
    toml::from_str::<PipelineConfig>(text).unwrap().resolve(&Overrides { seed: Some(seed), ..Default::default() })
}

fn store() -> (tempfile::TempDir, Pipeline) {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path().join("runs")).unwrap();
    (dir, Pipeline::new(store))
}

#[test]
fn pipeline_produces_an_analyzed_run_with_a_report() {
    let (_dir, p) = store();
    let mut epochs = 0;
    let m = p.run_all(&tiny_config(1), |_| epochs += 1).unwrap();
    assert_eq!(m.status, RunStatus::Analyzed);
    assert!(epochs >= 1);
    let id = &m.run_id;
    for a in [
        layout::CHECKPOINT,
        layout::LATENTS,
        layout::SCORES,
        layout::REPORT_HTML,
        layout::REPORT_MD,
        layout::TRAINING_LOG,
    ] {
        assert!(p.store().path(id, a).exists(), "{a} missing");
    }
    assert!(p.store().path(id, &layout::kde(3)).exists());
    let board = p.load_scoreboard(id).unwrap();
    assert!(board.predictiveness().is_some());
    let html = std::fs::read_to_string(p.store().path(id, layout::REPORT_HTML)).unwrap();
    assert!(html.contains("pending"));
}

#[test]
fn stages_refuse_to_run_out_of_order() {
    let (_dir, p) = store();
    let m = p.create_run(&tiny_config(2)).unwrap();
    match p.analyze(&m.run_id, false) {
        Err(Error::State(msg)) => assert!(msg.contains("train"), "{msg}"),
        other => panic!("expected a state error, got {other:?}"),
    }
    assert!(matches!(p.report(&m.run_id, false), Err(Error::State(_))));
    assert!(matches!(p.train("no-such-run", false, |_| {}), Err(Error::NotFound(_))));
}

#[test]
fn rerun_with_unchanged_inputs_is_a_no_op_unless_forced() {
    let (_dir, p) = store();
    let m = p.create_run(&tiny_config(3)).unwrap();
    let id = &m.run_id;
    assert_eq!(p.train(id, false, |_| {}).unwrap(), StageOutcome::Ran);
    assert_eq!(p.train(id, false, |_| {}).unwrap(), StageOutcome::Skipped);
    assert_eq!(p.analyze(id, false).unwrap(), StageOutcome::Ran);
    let scores = std::fs::read(p.store().path(id, layout::SCORES)).unwrap();
    assert_eq!(p.analyze(id, false).unwrap(), StageOutcome::Skipped);
    assert_eq!(p.train(id, true, |_| {}).unwrap(), StageOutcome::Ran);
    // Forcing train invalidates analyze, so it runs again.
    assert_eq!(p.analyze(id, false).unwrap(), StageOutcome::Ran);
    assert_eq!(std::fs::read(p.store().path(id, layout::SCORES)).unwrap(), scores, "retraining is deterministic");
}

#[test]
fn same_seed_gives_identical_scoreboards() {
    let (_dir, p) = store();
    let a = p.run_all(&tiny_config(4), |_| {}).unwrap();
    let b = p.run_all(&tiny_config(4), |_| {}).unwrap();
    let read = |id: &str| std::fs::read(p.store().path(id, layout::SCORES)).unwrap();
    assert_eq!(read(&a.run_id), read(&b.run_id));
    assert_eq!(a.dataset.content_hash, b.dataset.content_hash);
}

#[test]
fn explicit_dims_and_verdicts_flow_into_the_report() {
    let (_dir, p) = store();
    let m = p.run_all(&tiny_config(5), |_| {}).unwrap();
    let id = &m.run_id;
    let opts = EvidenceOptions { dims: Some(DimSelection::List(vec![1, 4])), ..Default::default() };
    assert_eq!(p.evidence(id, &opts, false).unwrap(), StageOutcome::Ran);
    assert!(p.store().path(id, &layout::traversal(3)).exists());
    let bad = EvidenceOptions { dims: Some(DimSelection::List(vec![9])), ..Default::default() };
    assert!(matches!(p.evidence(id, &bad, false), Err(Error::Contract(_))));

    p.evidence(id, &EvidenceOptions::default(), false).unwrap();
    p.report(id, false).unwrap();
    let before = std::fs::read(p.store().path(id, layout::REPORT_MD)).unwrap();
    assert_eq!(p.report(id, false).unwrap(), StageOutcome::Skipped);
    assert_eq!(p.report(id, true).unwrap(), StageOutcome::Ran);
    assert_eq!(std::fs::read(p.store().path(id, layout::REPORT_MD)).unwrap(), before, "regeneration is byte-identical");

    let top = p.load_scoreboard(id).unwrap().records.iter().find(|r| r.mpwd_rank == 1).unwrap().dim;
    p.store().record_verdict(id, top - 1, Verdict::Shortcut, "color", "tester").unwrap();
    assert_eq!(p.report(id, false).unwrap(), StageOutcome::Ran);
    let md = std::fs::read_to_string(p.store().path(id, layout::REPORT_MD)).unwrap();
    assert!(md.contains("shortcut"));
}

#[test]
fn attack_stage_writes_a_report() {
    let (_dir, p) = store();
    let mut cfg = tiny_config(6);
    let s = cfg.dataset.synthetic.as_mut().unwrap();
    s.kind = latentscout::data::SyntheticKind::Zoom;
    s.image_size = 32;
    s.palette.clear();
    let cfg = PipelineConfig { dataset: cfg.dataset.clone(), ..cfg }.resolve(&Overrides::default());
    let m = p.create_run(&cfg).unwrap();
    assert_eq!(p.attack(&m.run_id, false).unwrap(), StageOutcome::Ran);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.store().path(&m.run_id, layout::ATTACK_REPORT)).unwrap())
            .unwrap();
    assert_eq!(report["per_class"].as_array().unwrap().len(), 2);
    assert_eq!(p.attack(&m.run_id, false).unwrap(), StageOutcome::Skipped);
}
