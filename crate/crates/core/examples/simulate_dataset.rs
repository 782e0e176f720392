//! Simulates a week of a seven-appliance house, writes it as a dataset
//! directory and reads it back.

use nilm::data::{export_dataset, import_dataset, simulate_house, SimConfig};
use nilm::types::Registry;

fn main() -> nilm::Result<()> {
    let registry = Registry::bundled();
    let ds = simulate_house(&SimConfig::new(&registry, 7, 42), &registry)?;
    println!("{} samples, {} days, step {} s", ds.len(), ds.days(), ds.step());
    for (id, s) in &ds.appliance_power {
        let on = s.values.iter().filter(|&&v| v > 0.0).count();
        let kwh: f64 = s.values.iter().sum::<f64>() / 60.0 / 1000.0;
        println!("  {id:<16} ON {:>5.1}% of minutes, {kwh:>6.1} kWh", 100.0 * on as f64 / s.len() as f64);
    }
    let litres: f64 = ds.aggregate_water.values.iter().sum();
    println!("  aggregate water {litres:.0} L");

    let dir = std::env::temp_dir().join(format!("nilm-example-{}", std::process::id()));
    export_dataset(&ds, &dir)?;
    let back = import_dataset(&dir)?;
    println!("round trip identical: {}", back == ds);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
