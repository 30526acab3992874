//! Training curve figures rendered straight to PNG.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::trainer::EpochRecord;

fn plot_err(detail: String) -> Error {
    Error::Manifest(format!("plotting failed: {detail}"))
}

/// Register a system TTF for text rendering, once. Returns false when no
/// usable font exists; charts are then drawn without text.
fn fonts_available() -> bool {
    use std::sync::OnceLock;
    static FONT_OK: OnceLock<bool> = OnceLock::new();
    *FONT_OK.get_or_init(|| {
        let candidates = [
            "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
            "/usr/share/fonts/TTF/DejaVuSans.ttf",
            "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
        ];
        for path in candidates {
            if let Ok(bytes) = std::fs::read(path) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font(
                    "sans-serif",
                    plotters::style::FontStyle::Normal,
                    bytes,
                )
                .is_ok()
                {
                    return true;
                }
            }
        }
        false
    })
}

/// Loss components per epoch.
pub fn plot_loss_curves(history: &[EpochRecord], path: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(plot_err("empty history".into()));
    }
    let root = BitMapBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let max_epoch = history.last().map(|r| r.epoch).unwrap_or(0);
    let y_max = history
        .iter()
        .map(|r| r.total)
        .fold(f64::MIN, f64::max)
        .max(1e-6)
        * 1.05;
    let with_text = fonts_available();
    let mut builder = ChartBuilder::on(&root);
    builder.margin(12).x_label_area_size(40).y_label_area_size(60);
    if with_text {
        builder.caption("Training loss", ("sans-serif", 24));
    }
    let mut chart = builder
        .build_cartesian_2d(0f64..(max_epoch as f64 + 1.0), 0f64..y_max)
        .map_err(|e| plot_err(e.to_string()))?;
    let mut mesh = chart.configure_mesh();
    if with_text {
        mesh.x_desc("epoch").y_desc("loss");
    } else {
        mesh.x_labels(0).y_labels(0);
    }
    mesh.draw().map_err(|e| plot_err(e.to_string()))?;
    let series: [(&str, fn(&EpochRecord) -> f64, RGBColor); 4] = [
        ("total", |r| r.total, BLACK),
        ("classification", |r| r.l_c, RED),
        ("layout", |r| r.l_p, BLUE),
        ("structural", |r| r.l_s, GREEN),
    ];
    for (name, f, color) in series {
        let drawn = chart
            .draw_series(LineSeries::new(
                history.iter().map(|r| (r.epoch as f64, f(r))),
                &color,
            ))
            .map_err(|e| plot_err(e.to_string()))?;
        if with_text {
            drawn
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
    }
    if with_text {
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(|e| plot_err(e.to_string()))?;
    }
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

/// Validation recognition rate per epoch.
pub fn plot_recognition_rate(history: &[EpochRecord], path: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(plot_err("empty history".into()));
    }
    let root = BitMapBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let max_epoch = history.last().map(|r| r.epoch).unwrap_or(0);
    let with_text = fonts_available();
    let mut builder = ChartBuilder::on(&root);
    builder.margin(12).x_label_area_size(40).y_label_area_size(60);
    if with_text {
        builder.caption("Validation recognition rate", ("sans-serif", 24));
    }
    let mut chart = builder
        .build_cartesian_2d(0f64..(max_epoch as f64 + 1.0), 0f64..1f64)
        .map_err(|e| plot_err(e.to_string()))?;
    let mut mesh = chart.configure_mesh();
    if with_text {
        mesh.x_desc("epoch").y_desc("recognition rate");
    } else {
        mesh.x_labels(0).y_labels(0);
    }
    mesh.draw().map_err(|e| plot_err(e.to_string()))?;
    chart
        .draw_series(LineSeries::new(
            history.iter().map(|r| (r.epoch as f64, r.val_rr)),
            &BLUE,
        ))
        .map_err(|e| plot_err(e.to_string()))?;
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, val_rr: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            l_c: 3.0 - epoch as f64 * 0.1,
            l_p: 0.5,
            l_s: 0.2,
            total: 3.7 - epoch as f64 * 0.1,
            val_rr,
            lr: 1e-4,
            weight_digest: "d".into(),
        }
    }

    #[test]
    fn plots_render_to_png() {
        let dir = tempfile::tempdir().unwrap();
        let history: Vec<EpochRecord> =
            (0..10).map(|e| record(e, e as f64 / 10.0)).collect();
        let loss_path = dir.path().join("loss.png");
        let rr_path = dir.path().join("rr.png");
        plot_loss_curves(&history, &loss_path).unwrap();
        plot_recognition_rate(&history, &rr_path).unwrap();
        assert!(loss_path.metadata().unwrap().len() > 1000);
        assert!(rr_path.metadata().unwrap().len() > 1000);
    }

    #[test]
    fn empty_history_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_loss_curves(&[], &dir.path().join("x.png")).is_err());
        assert!(plot_recognition_rate(&[], &dir.path().join("y.png")).is_err());
    }
}
