//! Prints mean totals and change counts for the medium-range grid.

use streamflow::experiment::{grid_csv, run_grid, ExperimentConfig};
use streamflow::Catalog;

fn main() {
    let catalog = Catalog::default_catalog();
    let started = std::time::Instant::now();
    let cells = run_grid(&catalog, &ExperimentConfig::default()).expect("grid run");
    print!("{}", grid_csv(&cells));
    eprintln!("elapsed {:.1?}", started.elapsed());
}
