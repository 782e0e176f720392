//! Phase 1 on a simulated month: label events from the sub-meters, fit the
//! KNN classifier and score it on held-out days.

use nilm::config::PipelineConfig;
use nilm::data::{simulate_house, SimConfig};
use nilm::pipeline::{evaluate_phase1, label_dataset, overlap_group, run_phase1, train_knn, PipelineKind};
use nilm::preprocess::split_train_test;
use nilm::types::Registry;

fn main() -> nilm::Result<()> {
    let registry = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&registry, 30, 3), &registry)?;
    let (train, test) = split_train_test(&ds, 20, 10)?;
    let cfg = PipelineConfig::desk(PipelineKind::KnnOnly);
    let det = cfg.detector.resolve(&train.aggregate_power)?;
    let knn = train_knn(&train, &det, &cfg.phase1)?;
    println!("sigma_g {:.2} W, {} training points, k = {}", det.sigma_g, knn.labels.len(), knn.k);

    let overlap = overlap_group(&registry);
    let out = run_phase1(&test.aggregate_power, &knn, &det, &overlap)?;
    let (_, truth) = label_dataset(&test, &det, &cfg.phase1.matching)?;
    println!("{} test events, {} forwarded to Phase 2", out.all.len(), out.ambiguous.len());
    for row in evaluate_phase1(&truth, &out.all, &registry)? {
        let tag = if overlap.contains(&row.appliance) { "overlap" } else { "exclusive" };
        println!("  {:<16} {tag:<9} P {:.3} R {:.3} F {:.3}", row.appliance, row.precision, row.recall, row.f_measure);
    }
    Ok(())
}
