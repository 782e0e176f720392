//! Trains the parallel, iterative and baseline pipelines on a simulated house
//! and compares their dishwasher scores. Pass the number of days and the seed
//! as arguments (defaults: 30 days, seed 1).

use nilm::config::PipelineConfig;
use nilm::data::{simulate_house, SimConfig};
use nilm::metrics::Granularity;
use nilm::pipeline::{evaluate, infer, train_pipeline, PipelineKind};
use nilm::preprocess::split_train_test;
use nilm::types::Registry;

fn main() -> nilm::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let days: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(1);
    let registry = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&registry, days, seed), &registry)?;
    let test_days = (days / 4).max(1);
    let (train, test) = split_train_test(&ds, days - test_days, test_days)?;

    for kind in [PipelineKind::Baseline, PipelineKind::Parallel, PipelineKind::Iterative] {
        let cfg = PipelineConfig::desk(kind).with_seed(seed);
        let pipeline = train_pipeline(&train, &cfg)?;
        let inference = infer(&pipeline, &test, &cfg.phase2.window, cfg.phase2.threshold)?;
        let report = evaluate(&pipeline, &inference, &test, &cfg)?;
        let f = |signal: &str| {
            report
                .rows
                .iter()
                .find(|r| r.appliance == "dishwasher" && r.signal == signal && r.granularity == Granularity::Timestep)
                .map_or(f64::NAN, |r| r.f_measure)
        };
        println!("{kind:<10} dishwasher power F {:.3}  water F {:.3}  average F {:.3}", f("power"), f("water"), report.average_f);
    }
    Ok(())
}
