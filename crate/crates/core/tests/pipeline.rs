use std::collections::BTreeSet;

use nilm::config::PipelineConfig;
use nilm::data::{simulate_house, SimConfig};
use nilm::detect::DetectorConfig;
use nilm::pipeline::*;
use nilm::preprocess::{appliance_events, split_train_test};
use nilm::types::Registry;

fn quick(kind: PipelineKind, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::desk(kind).with_seed(seed);
    cfg.phase2.lstm.lstm_units = 8;
    cfg.phase2.lstm.fc_units = 4;
    cfg.phase2.train.epochs = 2;
    cfg.phase2.window.stride = 60;
    cfg
}

#[test]
fn profiles_and_residual_rebuild_the_filtered_signal() {
    let reg = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&reg, 10, 4).noiseless(), &reg).unwrap();
    let cfg = PipelineConfig::desk(PipelineKind::KnnOnly);
    let det = DetectorConfig::new(15.0).unwrap();
    let knn = train_knn(&ds, &det, &cfg.phase1).unwrap();
    let out = run_phase1(&ds.aggregate_power, &knn, &det, &overlap_group(&reg)).unwrap();
    let recon = reconstruct_house(&out.detection, &out.all, &reg, &ds.aggregate_power).unwrap();
    assert_eq!(conservation_fraction(&recon, &out.detection.filtered.values, 1e-6).unwrap(), 1.0);
}

#[test]
fn exclusive_appliances_alone_need_no_phase_two() {
    let reg = Registry::bundled();
    let mut sim = SimConfig::new(&reg, 20, 8);
    sim.usage.retain(|id, _| ["dryer", "heat_pump", "oven", "basement"].contains(&id.as_str()));
    let ds = simulate_house(&sim, &reg).unwrap();
    let (train, test) = split_train_test(&ds, 14, 6).unwrap();
    let cfg = PipelineConfig::desk(PipelineKind::KnnOnly);
    let det = cfg.detector.resolve(&train.aggregate_power).unwrap();
    let knn = train_knn(&train, &det, &cfg.phase1).unwrap();
    let out = run_phase1(&test.aggregate_power, &knn, &det, &overlap_group(&reg)).unwrap();
    assert!(out.ambiguous.is_empty());
    let (_, truth) = label_dataset(&test, &det, &cfg.phase1.matching).unwrap();
    for row in evaluate_phase1(&truth, &out.all, &reg).unwrap() {
        assert!(row.f_measure >= 0.95, "{} F {}", row.appliance, row.f_measure);
    }
}

#[test]
fn sub_metered_events_recover_appliance_energy() {
    let reg = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&reg, 10, 2).noiseless(), &reg).unwrap();
    let det = DetectorConfig::new(15.0).unwrap();
    for spec in &reg.appliances {
        let series = &ds.appliance_power[&spec.id];
        let events: Vec<(usize, f64)> = appliance_events(spec, series, &det).unwrap().into_iter().map(|(i, d, _, _)| (i, d)).collect();
        let r = reconstruct_from_events(&events, spec, series).unwrap();
        let est: f64 = r.profile.values.iter().sum();
        let truth: f64 = series.values.iter().sum();
        assert!((est - truth).abs() <= 0.05 * truth, "{}: {est} vs {truth}", spec.id);
    }
}

#[test]
fn knn_only_reports_are_reproducible() {
    let reg = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&reg, 30, 5), &reg).unwrap();
    let (train, test) = split_train_test(&ds, 20, 10).unwrap();
    let cfg = PipelineConfig::desk(PipelineKind::KnnOnly);
    let run = || {
        let p = train_pipeline(&train, &cfg).unwrap();
        let inf = infer(&p, &test, &cfg.phase2.window, 0.5).unwrap();
        evaluate(&p, &inf, &test, &cfg).unwrap().to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn phase_two_training_is_reproducible() {
    let reg = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&reg, 12, 6), &reg).unwrap();
    let (train, test) = split_train_test(&ds, 9, 3).unwrap();
    let cfg = quick(PipelineKind::Parallel, 3);
    let run = || {
        let p = train_pipeline(&train, &cfg).unwrap();
        assert_eq!(p.phase2.len(), 1);
        infer(&p, &test, &cfg.phase2.window, 0.5).unwrap().phase2[0].power_prob.clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn iterative_chain_with_dry_house_predicts_no_water() {
    let reg = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&reg, 8, 7), &reg).unwrap();
    let det = DetectorConfig::new(15.0).unwrap();
    let cfg = quick(PipelineKind::Iterative, 1).phase2;
    let knn = train_knn(&ds, &det, &Phase1Config::default()).unwrap();
    let forwarded = run_phase1(&ds.aggregate_power, &knn, &det, &overlap_group(&reg)).unwrap();
    let mut x = Phase2Inputs::from_phase1(&ds, &forwarded).unwrap();
    x.agg_water.iter_mut().for_each(|w| *w = 0.0);
    let mut t = ApplianceTargets::from_dataset(&ds, "dishwasher", 0.0).unwrap();
    t.water.iter_mut().for_each(|w| *w = 0.0);
    let chain = Phase2Model::Iterative(train_iterative("dishwasher", &x, &t, &cfg).unwrap());
    let pred = chain.predict(&x, &cfg.window, 0.5).unwrap();
    assert!(pred.water_bits.iter().all(|&b| b == 0));
}

#[test]
fn overlap_group_override_changes_routing() {
    let reg = Registry::bundled();
    let mut cfg = PipelineConfig::desk(PipelineKind::KnnOnly);
    assert_eq!(cfg.overlap_group(&reg), overlap_group(&reg));
    cfg.overlap = Some(vec!["fridge".into()]);
    assert_eq!(cfg.overlap_group(&reg), BTreeSet::from(["fridge".to_string()]));
}
