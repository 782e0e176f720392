//! Runs the event detector on a noisy step trace and on a simulated house.

use nilm::data::{simulate_house, SimConfig};
use nilm::detect::{detect, estimate_sigma_g, DetectorConfig};
use nilm::types::{Registry, SampledSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> nilm::Result<()> {
    // 200 W on at t=100, 500 W more at t=250, everything off at t=400.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let values: Vec<f64> = (0..500)
        .map(|t| {
            let level = if t >= 400 { 0.0 } else if t >= 250 { 700.0 } else if t >= 100 { 200.0 } else { 0.0 };
            300.0 + level + noise.sample(&mut rng)
        })
        .collect();
    let trace = SampledSeries::power(values);
    let sigma_g = estimate_sigma_g(&trace, 0.5)?;
    println!("estimated sigma_g = {sigma_g:.2} W");
    let d = detect(&trace, &DetectorConfig::new(sigma_g)?)?;
    for e in &d.events.events {
        println!("  event at {:>3}: {:+.1} W", e.index, e.delta);
    }

    let registry = Registry::bundled();
    let house = simulate_house(&SimConfig::new(&registry, 3, 1), &registry)?;
    let sigma_g = estimate_sigma_g(&house.aggregate_power, 0.5)?;
    let d = detect(&house.aggregate_power, &DetectorConfig::new(sigma_g)?)?;
    println!("3-day house: sigma_g {sigma_g:.2} W, {} events", d.events.len());
    Ok(())
}
