//! A two-mode, two-seed sweep with a post-hoc `c` axis: results table, cached
//! re-run and SVG plots.

use dcrec::experiment::{plot_dir, run_experiment, ExperimentSpec, PlotKind, ResultTable};

pub fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut spec = ExperimentSpec::from_toml(include_str!("../../../configs/smoke.toml"))?;
    spec.output_dir = dir.path().to_path_buf();
    spec.train.max_epochs = 2;

    let table = run_experiment(&spec)?;
    print!("{}", table.render());

    // every run is found on disk the second time
    let again = run_experiment(&spec)?;
    assert_eq!(again.rows, table.rows);
    let root = spec.output_path()?;
    assert_eq!(ResultTable::load(&root)?, table);
    for kind in [PlotKind::SweepCurve, PlotKind::ExposureBars] {
        println!("wrote {}", plot_dir(&root, kind)?.display());
    }
    Ok(())
}
