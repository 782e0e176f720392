//! Reads meter files laid out like AMPds (`unix_ts`, `P`) into a sampled series,
//! with and without gap filling.

use nilm::data::{load_meter_csv, ColumnMap, GapPolicy};
use nilm::types::SeriesKind;

fn main() -> nilm::Result<()> {
    let dir = std::env::temp_dir().join(format!("nilm-meter-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("WHE.csv");
    // The 120 s row is missing.
    std::fs::write(&path, "unix_ts,V,I,P\n0,120,1.5,180\n60,120,1.6,182\n180,120,5.2,620\n240,120,5.1,615\n").expect("write fixture");

    match load_meter_csv(&path, &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject) {
        Ok(_) => println!("unexpected: gap accepted"),
        Err(e) => println!("strict load: {e}"),
    }
    let s = load_meter_csv(&path, &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::ForwardFill)?;
    println!("forward-filled: start {} step {} values {:?}", s.start_time, s.step, s.values);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
