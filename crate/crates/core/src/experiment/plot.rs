use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{value_text, ResultTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Mean NDCG@K against one sweep parameter, one line per other coordinate.
    SweepCurve,
    /// Bucket item ratio next to the exposure share of each row.
    ExposureBars,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SweepCurve => "sweep_curve.svg",
            PlotKind::ExposureBars => "exposure_bars.svg",
        }
    }
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// Writes `dir/<kind>.svg` from the `results.json` in `dir`.
pub fn plot_dir(dir: &Path, kind: PlotKind) -> Result<PathBuf> {
    let table = ResultTable::load(dir)?;
    let out = dir.join(kind.file_name());
    plot(&table, kind, None, &out)?;
    Ok(out)
}

/// Renders a result table as an SVG file.
///
/// For sweep curves `x_axis` picks the parameter on the horizontal axis; by
/// default the last numeric sweep axis is used.
pub fn plot(table: &ResultTable, kind: PlotKind, x_axis: Option<&str>, out: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Empty("result table"));
    }
    match kind {
        PlotKind::SweepCurve => sweep_curve(table, x_axis, out),
        PlotKind::ExposureBars => exposure_bars(table, out),
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn sweep_curve(table: &ResultTable, x_axis: Option<&str>, out: &Path) -> Result<()> {
    let axes = table.axes();
    let numeric = |a: &str| table.rows.iter().all(|r| r.coord(a).is_some_and(|v| v.as_f64().is_some()));
    let x_axis = match x_axis {
        Some(a) if axes.iter().any(|x| x == a) => Some(a.to_string()),
        Some(a) => return Err(Error::Config(format!("`{a}` is not a sweep axis of this table"))),
        None => axes.iter().rev().find(|a| numeric(a)).or(axes.last()).cloned(),
    };

    // categorical axes are placed at their index
    let mut categories: Vec<String> = Vec::new();
    let raw_x = |r: &super::ResultRow, cats: &mut Vec<String>| -> f64 {
        let Some(a) = &x_axis else { return 0.0 };
        let v = r.coord(a).expect("axis present on every row");
        if let Some(x) = v.as_f64().filter(|_| numeric(a)) {
            return x;
        }
        let t = value_text(v);
        match cats.iter().position(|c| *c == t) {
            Some(i) => i as f64,
            None => {
                cats.push(t);
                (cats.len() - 1) as f64
            }
        }
    };
    let mut xs: Vec<f64> = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for r in &table.rows {
        let x = raw_x(r, &mut categories);
        let Some(y) = r.mean_ndcg else { continue };
        xs.push(x);
        let label = r.label_without(x_axis.as_deref());
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series { label, points: vec![(x, y)] }),
        }
    }
    if series.is_empty() {
        return Err(Error::Empty("result table has no successful runs"));
    }
    let log_x = categories.is_empty() && xs.iter().all(|x| *x > 0.0) && {
        let (lo, hi) = min_max(&xs);
        hi / lo >= 100.0
    };
    let tx = |x: f64| if log_x { x.log10() } else { x };
    for s in &mut series {
        for p in &mut s.points {
            p.0 = tx(p.0);
        }
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (x0, x1) = padded(min_max(&xs.iter().map(|x| tx(*x)).collect::<Vec<_>>()));
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (y0, y1) = padded(min_max(&ys));
    let x_desc = match (&x_axis, log_x) {
        (Some(a), true) => format!("log10({a})"),
        (Some(a), false) => a.clone(),
        (None, _) => "point".into(),
    };

    let root = SVGBackend::new(out, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{}: NDCG@{}", table.name, table.k), ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    let cats = categories.clone();
    let fmt = move |x: &f64| {
        if cats.is_empty() {
            format!("{x:.3}")
        } else {
            let i = x.round();
            if (x - i).abs() < 1e-9 && i >= 0.0 {
                cats.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        }
    };
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(format!("NDCG@{}", table.k))
        .x_label_formatter(&fmt)
        .draw()
        .map_err(plot_err)?;
    for (j, s) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        if s.points.len() > 1 {
            chart.draw_series(LineSeries::new(s.points.clone(), color.stroke_width(2))).map_err(plot_err)?;
        }
        chart
            .draw_series(s.points.iter().map(|&p| Circle::new(p, 4, color.filled())))
            .map_err(plot_err)?
            .label(s.label.clone())
            .legend(move |(x, y)| Circle::new((x + 10, y), 4, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn exposure_bars(table: &ResultTable, out: &Path) -> Result<()> {
    let rows: Vec<_> = table.exposure_rows().collect();
    let Some(first) = rows.first().and_then(|r| r.exposure.as_ref()) else {
        return Err(Error::Empty("result table has no exposure reports"));
    };
    let nb = first.labels.len();
    let groups = 1 + rows.len();
    let ymax = rows
        .iter()
        .filter_map(|r| r.exposure.as_ref())
        .flat_map(|e| e.shares.iter().chain(&e.item_ratio))
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-3)
        * 1.15;
    let below = -0.08 * ymax;

    let root = SVGBackend::new(out, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{}: top-{} exposure by popularity bucket", table.name, first.k), ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(20)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..nb as f64, below..ymax)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .disable_x_axis()
        .y_desc("fraction")
        .draw()
        .map_err(plot_err)?;

    let width = 0.8 / groups as f64;
    let bar = |b: usize, g: usize| 0.1 + b as f64 + g as f64 * width;
    let ratio_color = RGBColor(150, 150, 150);
    chart
        .draw_series(
            first
                .item_ratio
                .iter()
                .enumerate()
                .map(|(b, &v)| Rectangle::new([(bar(b, 0), 0.0), (bar(b, 0) + width, v)], ratio_color.filled())),
        )
        .map_err(plot_err)?
        .label("item ratio")
        .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], ratio_color.filled()));
    for (g, r) in rows.iter().enumerate() {
        let e = r.exposure.as_ref().expect("filtered above");
        let color = PALETTE[g % PALETTE.len()];
        let sum: f64 = e.shares.iter().sum();
        chart
            .draw_series(
                e.shares
                    .iter()
                    .enumerate()
                    .map(|(b, &v)| Rectangle::new([(bar(b, g + 1), 0.0), (bar(b, g + 1) + width, v)], color.filled())),
            )
            .map_err(plot_err)?
            .label(format!("{} exposure (sum {sum:.3}, gini {:.3})", r.label(), e.gini))
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], color.filled()));
    }
    let style = ("sans-serif", 15).into_font().color(&BLACK).pos(plotters::style::text_anchor::Pos::new(
        plotters::style::text_anchor::HPos::Center,
        plotters::style::text_anchor::VPos::Center,
    ));
    chart
        .draw_series(first.labels.iter().enumerate().map(|(b, l)| Text::new(l.clone(), (b as f64 + 0.5, below / 2.0), style.clone())))
        .map_err(plot_err)?;
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5f64.max(lo.abs() * 0.1) };
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ExposureReport;
    use crate::experiment::table::{Cell, ResultRow};
    use serde_json::Value;

    fn table(rows: Vec<ResultRow>) -> ResultTable {
        ResultTable {
            name: "t".into(),
            spec_hash: "h".into(),
            version: "v".into(),
            k: 10,
            reference: None,
            rows,
            tuned: vec![],
        }
    }

    fn row(point: Vec<(String, Value)>, ndcg: f64, exposure: Option<ExposureReport>) -> ResultRow {
        let cell = Cell {
            seed: 0,
            run_hash: "r".into(),
            ndcg: Some(ndcg),
            hit_rate: Some(ndcg),
            c: Some(0.0),
            error: None,
        };
        ResultRow::new(point, vec![cell], exposure)
    }

    #[test]
    fn empty_table_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.svg");
        assert!(matches!(plot(&table(vec![]), PlotKind::SweepCurve, None, &out), Err(Error::Empty(_))));
        assert!(plot(&table(vec![]), PlotKind::ExposureBars, None, &out).is_err());
    }

    #[test]
    fn single_point_gives_single_marker() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.svg");
        plot(&table(vec![row(vec![], 0.4, None)]), PlotKind::SweepCurve, None, &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        // one marker in the plot and one in the legend
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn curves_and_bars_render() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<ResultRow> = [0.0, 10.0, 20.0]
            .iter()
            .map(|&c| row(vec![("model.c".into(), Value::from(c))], 0.3 + c / 100.0, None))
            .collect();
        let out = dir.path().join("c.svg");
        plot(&table(rows), PlotKind::SweepCurve, None, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap().matches("<circle").count(), 4);

        let e = ExposureReport {
            labels: vec!["[0,10)".into(), ">=10".into()],
            item_ratio: vec![0.8, 0.2],
            shares: vec![0.3, 0.7],
            gini: 0.5,
            k: 10,
            num_users: 4,
        };
        let out = dir.path().join("e.svg");
        plot(&table(vec![row(vec![], 0.3, Some(e))]), PlotKind::ExposureBars, None, &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert!(svg.contains("sum 1.000"));
        assert!(svg.contains("&gt;=10") || svg.contains(">=10"));
    }
}
