//! Recomputes F-measures from published precision/recall pairs and the
//! macro-average of a results column.

use nilm::metrics::{f_from, macro_average};

fn main() -> nilm::Result<()> {
    let rows = [("fridge", 0.73, 0.82, 0.77), ("dishwasher", 0.74, 0.77, 0.76), ("dryer", 0.95, 0.98, 0.97)];
    for (name, p, r, printed) in rows {
        println!("{name:<12} P {p:.2} R {r:.2}  F {:.3} (printed {printed:.2})", f_from(p, r));
    }
    let column = [0.96, 0.99, 0.73, 0.99, 0.95, 0.97, 0.97];
    println!("macro-average of {column:?} = {:.3}", macro_average(&column)?);
    Ok(())
}
