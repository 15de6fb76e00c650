//! Writes the bundled synthetic identification record for the elevation axis:
//! 4 s at 1 kHz of the chirp-plus-step excitation, noise free.
//!
//! cargo run --example make_dataset -- data/h11_synthetic.csv

use std::fs::File;

use mirror_ftsm::sysid::{excitation_signal, IoDataset};
use mirror_ftsm::PlantParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/h11_synthetic.csv".into());
    let period = 0.001;
    let data = IoDataset::simulate(&PlantParams::ELEVATION, excitation_signal(4000, period), period)?;
    data.write_csv(File::create(&path)?)?;
    println!("wrote {path}");
    Ok(())
}
