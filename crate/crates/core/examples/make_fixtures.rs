//! Writes the sample data set and the synthetic price panel used by the CLI tests.
//!
//! Usage: `cargo run -p rankshrink-core --example make_fixtures -- <dir>`

use std::path::PathBuf;

use rankshrink::harness::DEFAULT_SEED;
use rankshrink::ingest::{synthetic_price_panel, write_price_csv};
use rankshrink::io::write_data_csv;
use rankshrink::model::{ar_singular_covariance, sample_singular_mvn, substream};
use rankshrink::PopulationModel;

fn main() -> rankshrink::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;

    let (n, p, r) = (150, 60, 50);
    let model = PopulationModel::with_unit_mean(ar_singular_covariance(p, r, 0.5)?, "ar");
    let x = sample_singular_mvn(&model, n, &mut substream(DEFAULT_SEED, 0));
    write_data_csv(
        dir.join("data_n150_p60_r50.csv"),
        &x,
        &[format!("seed={DEFAULT_SEED} n={n} p={p} r={r} model=ar(0.5) mean=1")],
    )?;

    let panel = synthetic_price_panel(107, 168, 60, 2016);
    write_price_csv(dir.join("prices_synthetic.csv"), &panel)?;
    Ok(())
}
