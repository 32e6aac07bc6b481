use std::fmt::Write as _;

/// Minimal static line chart as an SVG document: one polyline per series
/// over a shared time axis, with a legend and auto-scaled axes.
pub fn line_chart_svg(
    title: &str,
    t: &[f64],
    series: &[(&str, &[f64])],
    y_label: &str,
) -> String {
    let (w, h) = (760.0, 420.0);
    let (ml, mr, mt, mb) = (62.0, 16.0, 34.0, 42.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;

    let tmin = t.first().copied().unwrap_or(0.0);
    let tmax = t.last().copied().unwrap_or(1.0).max(tmin + 1e-12);
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, ys) in series {
        for &y in ys.iter() {
            if y.is_finite() {
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);

    let sx = |tv: f64| ml + (tv - tmin) / (tmax - tmin) * pw;
    let sy = |yv: f64| mt + (ymax - yv) / (ymax - ymin) * ph;

    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        xml_escape(title)
    );
    // axes
    let _ = write!(
        svg,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        mt + ph,
        ml + pw,
        mt + ph
    );
    let _ = write!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + ph
    );
    for k in 0..=4 {
        let yv = ymin + k as f64 / 4.0 * (ymax - ymin);
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{:.3}</text>"#,
            ml - 4.0,
            sy(yv) + 3.0,
            yv
        );
        let _ = write!(
            svg,
            r##"<line x1="{ml}" y1="{0}" x2="{1}" y2="{0}" stroke="#dddddd"/>"##,
            sy(yv),
            ml + pw
        );
        let tv = tmin + k as f64 / 4.0 * (tmax - tmin);
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.4}</text>"#,
            sx(tv),
            mt + ph + 14.0,
            tv
        );
    }
    let _ = write!(
        svg,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    );
    for (si, (name, ys)) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let mut pts = String::new();
        // subsample long series for a compact file
        let stride = (t.len() / 2000).max(1);
        for (k, (&tv, &yv)) in t.iter().zip(ys.iter()).enumerate() {
            if k % stride != 0 && k != t.len() - 1 {
                continue;
            }
            if yv.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(tv), sy(yv));
            }
        }
        let _ = write!(
            svg,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"/>"#
        );
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            ml + pw - 150.0,
            mt + 6.0 + 16.0 * si as f64,
            ml + pw - 136.0,
            mt + 15.0 + 16.0 * si as f64,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_series_and_title() {
        let t = [0.0, 0.5, 1.0];
        let a = [1.0, 2.0, 0.5];
        let svg = line_chart_svg("demo", &t, &[("a", &a)], "y");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("demo"));
    }
}
