//! Report writers: evaluation summaries as key-value text and CSV, bench
//! results as CSV, and a minimal SVG line plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::BenchResult;
use crate::error::Result;
use crate::metrics::EvalReport;

pub fn eval_report_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: f64| writeln!(out, "{k}: {v:.6}").unwrap();
    kv("accuracy_macro", r.macro_measures.accuracy);
    kv("sensitivity_macro", r.macro_measures.sensitivity);
    kv("precision_macro", r.macro_measures.precision);
    kv("f1_macro", r.macro_measures.f1);
    kv("accuracy_weighted", r.weighted_measures.accuracy);
    kv("sensitivity_weighted", r.weighted_measures.sensitivity);
    kv("precision_weighted", r.weighted_measures.precision);
    kv("f1_weighted", r.weighted_measures.f1);
    kv("vgw_rate", r.vgw_rate);
    kv("success_rate_macro", r.success_rate);
    kv("success_rate_weighted", r.success_rate_weighted);
    writeln!(
        out,
        "confusion: tp={} fp={} tn={} fn={}",
        r.confusion.true_positive,
        r.confusion.false_positive,
        r.confusion.true_negative,
        r.confusion.false_negative
    )
    .unwrap();
    for cell in r
        .macro_measures
        .degenerate_cells
        .iter()
        .chain(&r.weighted_measures.degenerate_cells)
    {
        writeln!(out, "degenerate: {cell}").unwrap();
    }
    for (group, sens) in &r.per_group_sensitivity {
        writeln!(out, "sensitivity_group[{group}]: {sens:.6}").unwrap();
    }
    out
}

pub fn eval_report_csv(r: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    let mut kv = |k: &str, v: f64| writeln!(out, "{k},{v:.6}").unwrap();
    kv("accuracy_macro", r.macro_measures.accuracy);
    kv("sensitivity_macro", r.macro_measures.sensitivity);
    kv("precision_macro", r.macro_measures.precision);
    kv("f1_macro", r.macro_measures.f1);
    kv("accuracy_weighted", r.weighted_measures.accuracy);
    kv("sensitivity_weighted", r.weighted_measures.sensitivity);
    kv("precision_weighted", r.weighted_measures.precision);
    kv("f1_weighted", r.weighted_measures.f1);
    kv("vgw_rate", r.vgw_rate);
    kv("success_rate_macro", r.success_rate);
    kv("success_rate_weighted", r.success_rate_weighted);
    for (group, sens) in &r.per_group_sensitivity {
        writeln!(out, "sensitivity_group_{group},{sens:.6}").unwrap();
    }
    out
}

pub fn write_eval_report(r: &EvalReport, text_path: &Path, csv_path: &Path) -> Result<()> {
    fs::write(text_path, eval_report_text(r))?;
    fs::write(csv_path, eval_report_csv(r))?;
    Ok(())
}

pub fn bench_csv(r: &BenchResult) -> String {
    let mut out = String::from("count,mean_s,std_s\n");
    for p in &r.points {
        writeln!(out, "{},{:.6},{:.6}", p.count, p.mean_s, p.std_s).unwrap();
    }
    writeln!(out, "# slope_s_per_streamline,{:.3e}", r.slope).unwrap();
    writeln!(out, "# intercept_s,{:.3e}", r.intercept).unwrap();
    writeln!(out, "# r_squared,{:.6}", r.r_squared).unwrap();
    writeln!(out, "# repetitions,{}", r.repetitions).unwrap();
    out
}

pub fn write_bench_csv(r: &BenchResult, path: &Path) -> Result<()> {
    fs::write(path, bench_csv(r))?;
    Ok(())
}

/// Plain SVG polyline plot of (x, y) points with axis labels.
pub fn svg_line_plot(
    points: &[(f64, f64)],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> String {
    let (w, h, ml, mb, mt, mr) = (640.0, 400.0, 70.0, 50.0, 40.0, 20.0);
    let x_max = points.iter().map(|p| p.0).fold(f64::MIN, f64::max).max(1e-12);
    let y_max = points.iter().map(|p| p.1).fold(f64::MIN, f64::max).max(1e-12);
    let px = |x: f64| ml + (x / x_max) * (w - ml - mr);
    let py = |y: f64| h - mb - (y / y_max) * (h - mb - mt);
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        write!(path, "{}{:.1},{:.1} ", if i == 0 { "M" } else { "L" }, px(*x), py(*y)).unwrap();
    }
    let mut circles = String::new();
    for (x, y) in points {
        write!(
            circles,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#1f77b4"/>"##,
            px(*x),
            py(*y)
        )
        .unwrap();
    }
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{:.0}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>
<line x1="{ml}" y1="{:.0}" x2="{:.0}" y2="{:.0}" stroke="black"/>
<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.0}" stroke="black"/>
<text x="{:.0}" y="{:.0}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>
<text x="16" y="{:.0}" transform="rotate(-90 16 {:.0})" text-anchor="middle" font-family="sans-serif" font-size="12">{y_label}</text>
<text x="{ml}" y="{:.0}" font-family="sans-serif" font-size="10" text-anchor="start">0</text>
<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="10" text-anchor="end">{x_max:.0}</text>
<text x="{:.0}" y="{mt}" font-family="sans-serif" font-size="10" text-anchor="end">{y_max:.3}</text>
<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>
{circles}
</svg>
"##,
        w / 2.0,
        h - mb,
        w - mr,
        h - mb,
        h - mb,
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0,
        h - mb + 14.0,
        w - mr,
        h - mb + 14.0,
        ml - 4.0,
    )
}

pub fn write_bench_svg(r: &BenchResult, path: &Path) -> Result<()> {
    let points: Vec<(f64, f64)> =
        r.points.iter().map(|p| (p.count as f64, p.mean_s)).collect();
    fs::write(
        path,
        svg_line_plot(&points, "Filtering time vs streamline count", "streamlines", "seconds"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate;

    #[test]
    fn report_text_has_all_measures() {
        let pred = [true, false, true, false];
        let truth = [true, false, false, true];
        let groups = vec![Some("g".to_string()), None, None, Some("g".to_string())];
        let r = evaluate(&pred, &truth, &groups).unwrap();
        let text = eval_report_text(&r);
        for key in [
            "accuracy_macro",
            "sensitivity_weighted",
            "vgw_rate",
            "success_rate_macro",
            "confusion",
            "sensitivity_group[g]",
        ] {
            assert!(text.contains(key), "missing {key} in:\n{text}");
        }
        let csv = eval_report_csv(&r);
        assert!(csv.starts_with("metric,value\n"));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = svg_line_plot(&[(1.0, 0.1), (2.0, 0.2)], "t", "x", "y");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<path"));
    }
}
