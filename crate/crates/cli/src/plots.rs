//! Static SVG figures: MI per case and metered profiles per case.

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use privshape_core::privacy::MiReport;

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plot: {e:?}")
}

/// Grouped bars of aggregate MI (P and Q) for every case.
pub fn mi_bars(reports: &[MiReport]) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let top = reports
            .iter()
            .map(|r| r.aggregate_p.max(r.aggregate_q))
            .fold(0.0, f64::max)
            .max(0.1)
            * 1.1;
        let n = reports.len().max(1) as f64;
        let mut chart = ChartBuilder::on(&root)
            .caption(
                "Mutual information between metered and actual load",
                ("sans-serif", 18),
            )
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(52)
            .build_cartesian_2d(0.0..n, 0.0..top)
            .map_err(plot_err)?;
        let labels: Vec<String> = reports.iter().map(|r| format!("case {}", r.case)).collect();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(reports.len().max(1))
            .x_label_formatter(&|x| {
                let i = x.floor() as usize;
                labels.get(i).cloned().unwrap_or_default()
            })
            .y_desc("MI (bits)")
            .draw()
            .map_err(plot_err)?;
        let bars = |offset: f64, value: fn(&MiReport) -> f64, color: RGBColor| {
            reports.iter().enumerate().map(move |(i, r)| {
                let x0 = i as f64 + offset;
                Rectangle::new([(x0, 0.0), (x0 + 0.35, value(r))], color.filled())
            })
        };
        let blue = RGBColor(31, 119, 180);
        let orange = RGBColor(255, 127, 14);
        chart
            .draw_series(bars(0.15, |r| r.aggregate_p, blue))
            .map_err(plot_err)?
            .label("real power")
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], blue.filled()));
        chart
            .draw_series(bars(0.5, |r| r.aggregate_q, orange))
            .map_err(plot_err)?
            .label("reactive power")
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], orange.filled()));
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Metered real and reactive power against the slot index for one case.
pub fn metered_profile(case: usize, pm: &[f64], qm: &[f64]) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (820, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let lo = pm.iter().chain(qm).copied().fold(0.0, f64::min);
        let hi = pm.iter().chain(qm).copied().fold(0.0, f64::max).max(0.1) * 1.1;
        let slots = pm.len().max(2);
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("Metered load, case {case}"), ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(52)
            .build_cartesian_2d(1usize..slots, lo..hi)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("slot")
            .y_desc("kW / kvar")
            .draw()
            .map_err(plot_err)?;
        let blue = RGBColor(31, 119, 180);
        let orange = RGBColor(255, 127, 14);
        chart
            .draw_series(LineSeries::new(
                pm.iter().enumerate().map(|(i, &v)| (i + 1, v)),
                blue,
            ))
            .map_err(plot_err)?
            .label("p_m (kW)")
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], blue));
        chart
            .draw_series(LineSeries::new(
                qm.iter().enumerate().map(|(i, &v)| (i + 1, v)),
                orange,
            ))
            .map_err(plot_err)?
            .label("q_m (kvar)")
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], orange));
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}
