//! Static norm-versus-time charts rendered from a diagnostics CSV.

use plotters::prelude::*;

use sqg_galerkin::io::read_diagnostics_csv;

use crate::error::{CliError, CliResult};

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("plot rendering failed: {e}"))
}

/// SVG with one line per norm column (`L2`, `Halpha`, `H2`) on a log scale.
pub fn norms_svg(csv: &str, title: &str) -> CliResult<String> {
    let (_, rows) = read_diagnostics_csv(csv)?;
    if rows.is_empty() {
        return Err(CliError::Io("diagnostics CSV has no rows to plot".into()));
    }
    let series: [(&str, Vec<(f64, f64)>, RGBColor); 3] = [
        ("L2", rows.iter().map(|r| (r.t, r.l2)).collect(), BLUE),
        ("Halpha", rows.iter().map(|r| (r.t, r.h_alpha)).collect(), GREEN),
        ("H2", rows.iter().map(|r| (r.t, r.h2)).collect(), RED),
    ];
    let t0 = rows.first().map(|r| r.t).unwrap_or(0.0);
    let t1 = rows.last().map(|r| r.t).unwrap_or(1.0).max(t0 + f64::EPSILON);
    let positive = series.iter().flat_map(|(_, s, _)| s.iter().map(|p| p.1)).filter(|v| *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo / 2.0, hi * 2.0) } else { (1e-3, 1.0) };

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(t0..t1, (lo..hi).log_scale())
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("t").y_desc("norm").draw().map_err(plot_err)?;
        for (name, points, color) in series {
            let pts: Vec<_> = points.into_iter().filter(|p| p.1 > 0.0).collect();
            chart
                .draw_series(LineSeries::new(pts, color))
                .map_err(plot_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}
