// Static SVG charts: per-epoch energy bars and an intensity timeline.

use std::fmt::Write;

use carbonledger::{EnergyLedger, IntensityForecast};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn frame(title: &str, y_label: &str, y_max: f64, body: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{x0}" y="{}" text-anchor="start">{}</text>"#,
        y1 - 8.0,
        escape(y_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        x0 - 4.0,
        y1 + 4.0,
        format_tick(y_max)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">0</text>"#,
        x0 - 4.0,
        y0 + 4.0
    );
    svg.push_str(body);
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else if v >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn epoch_energy_svg(ledger: &EnergyLedger) -> String {
    let energies: Vec<f64> = ledger.epochs().iter().map(|e| e.energy.total_kwh).collect();
    let y_max = energies
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / energies.len().max(1) as f64;
    let mut body = String::new();
    for (i, kwh) in energies.iter().enumerate() {
        let h = kwh / y_max * plot_h;
        let _ = writeln!(
            body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a7c59"><title>epoch {i}: {kwh:.6} kWh</title></rect>"##,
            MARGIN + i as f64 * slot + slot * 0.1,
            HEIGHT - MARGIN - h,
            slot * 0.8,
            h
        );
    }
    frame(
        &format!("Energy per epoch, run {}", ledger.run_id),
        "kWh",
        y_max,
        &body,
    )
}

pub fn intensity_svg(forecast: &IntensityForecast) -> String {
    let points = forecast.points();
    let y_max = points
        .iter()
        .map(|p| p.1)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let (t0, t1) = match (points.first(), points.last()) {
        (Some(a), Some(b)) if b.0 > a.0 => (a.0, b.0),
        _ => (0, 1),
    };
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let coords: Vec<String> = points
        .iter()
        .map(|&(t, g)| {
            format!(
                "{:.2},{:.2}",
                MARGIN + (t - t0) as f64 / (t1 - t0) as f64 * plot_w,
                HEIGHT - MARGIN - g / y_max * plot_h
            )
        })
        .collect();
    let body = format!(
        r##"<polyline points="{}" fill="none" stroke="#b5452f" stroke-width="1.5"/>
"##,
        coords.join(" ")
    );
    frame("Carbon intensity", "gCO2/kWh", y_max, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_still_render() {
        let ledger = EnergyLedger::new("r", 1.0).unwrap();
        let svg = epoch_energy_svg(&ledger);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let f = IntensityForecast::new("X", vec![]).unwrap();
        assert!(intensity_svg(&f).contains("<polyline"));
    }

    #[test]
    fn one_bar_per_epoch() {
        use carbonledger::epochs::EpochRecord;
        use carbonledger::EnergySpan;
        use std::collections::BTreeMap;

        let mut ledger = EnergyLedger::new("r", 1.0).unwrap();
        for i in 0..3 {
            let per = BTreeMap::from([("gpu:0".to_string(), 0.5 * (i + 1) as f64)]);
            ledger
                .push_record(EpochRecord {
                    index: i,
                    start_ms: i as i64 * 10,
                    end_ms: i as i64 * 10 + 10,
                    energy: EnergySpan::new(i as i64 * 10, i as i64 * 10 + 10, per, 1.0).unwrap(),
                    duration_s: 0.01,
                    degraded: false,
                })
                .unwrap();
        }
        let svg = epoch_energy_svg(&ledger);
        assert_eq!(svg.matches("<rect x=").count(), 3);
        assert!(svg.contains("epoch 2: 1.500000 kWh"));
    }
}
