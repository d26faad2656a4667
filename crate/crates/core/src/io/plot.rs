//! Static SVG plots of run series.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::{read_series, read_spectrum, Series};
use crate::diagnostics::fit_decay_rate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Norms,
    Spectrum,
    RateFit,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norms" => Ok(PlotKind::Norms),
            "spectrum" => Ok(PlotKind::Spectrum),
            "rate_fit" => Ok(PlotKind::RateFit),
            other => Err(Error::param("kind", format!("unknown plot kind `{other}`"))),
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
/// Values below this are clipped on log axes.
const LOG_FLOOR: f64 = 1e-300;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_y: bool,
}

impl Frame {
    fn fit(xs: &[f64], ys: &[&[f64]], log_y: bool) -> Self {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let x = range(&mut xs.iter().copied());
        let y = range(&mut ys.iter().flat_map(|s| s.iter()).map(|&v| if log_y { v.max(LOG_FLOOR).log10() } else { v }));
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self {
            x: pad(x),
            y: pad(y),
            log_y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let v = if self.log_y { y.max(LOG_FLOOR).log10() } else { y };
        H - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn header(svg: &mut String, title: &str, frame: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let fmt_y = |v: f64| if frame.log_y { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    for (v, y) in [(frame.y.0, y0), (frame.y.1, y1)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, x0 - 4.0, fmt_y(v));
    }
    for (v, x) in [(frame.x.0, x0), (frame.x.1, x1)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.3}</text>"#, y0 + 16.0);
    }
}

fn polyline(svg: &mut String, frame: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
}

fn legend(svg: &mut String, names: &[&str]) {
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let x = W - MARGIN - 110.0;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{name}</text>"#, x + 26.0, y + 4.0);
    }
    let _ = writeln!(svg, "</g>");
}

fn column(series: &Series, name: &str) -> Result<Vec<f64>> {
    series
        .column(name)
        .ok_or_else(|| Error::MalformedSeries(format!("missing column `{name}`")))
}

/// Norm histories on a log axis.
pub fn norms_svg(series: &Series) -> Result<String> {
    let t = column(series, "time")?;
    let names = ["l2", "linf", "h2"];
    let cols: Vec<Vec<f64>> = names.iter().map(|n| column(series, n)).collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let frame = Frame::fit(&t, &refs, true);
    let mut svg = String::new();
    header(&mut svg, "Norms", &frame, "t", "norm");
    for (i, c) in cols.iter().enumerate() {
        polyline(&mut svg, &frame, &t, c, COLORS[i]);
    }
    legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// `|ĥ(k)|` on a log axis.
pub fn spectrum_svg(spectrum: &[(f64, f64)]) -> Result<String> {
    if spectrum.is_empty() {
        return Err(Error::MalformedSeries("empty spectrum".into()));
    }
    let (k, a): (Vec<f64>, Vec<f64>) = spectrum.iter().copied().unzip();
    let frame = Frame::fit(&k, &[&a], true);
    let mut svg = String::new();
    header(&mut svg, "Spectrum", &frame, "k", "|ĥ(k)|");
    polyline(&mut svg, &frame, &k, &a, COLORS[0]);
    legend(&mut svg, &["|ĥ(k)|"]);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// `‖h‖²_{L²}` with its least-squares exponential fit over the whole series.
pub fn rate_fit_svg(series: &Series) -> Result<String> {
    let t = column(series, "time")?;
    let e: Vec<f64> = column(series, "l2")?.iter().map(|v| v * v).collect();
    let window = [t[0], *t.last().expect("nonempty")];
    let fit = fit_decay_rate(&e, &t, window)?;
    let n = t.len() as f64;
    let mean_t = t.iter().sum::<f64>() / n;
    let mean_log = e.iter().map(|v| v.ln()).sum::<f64>() / n;
    let fitted: Vec<f64> = t.iter().map(|&x| (mean_log + fit.rate * (x - mean_t)).exp()).collect();
    let frame = Frame::fit(&t, &[&e, &fitted], true);
    let mut svg = String::new();
    header(&mut svg, "Decay of the squared L² norm", &frame, "t", "‖h‖²");
    polyline(&mut svg, &frame, &t, &e, COLORS[0]);
    polyline(&mut svg, &frame, &t, &fitted, COLORS[1]);
    legend(&mut svg, &["‖h‖²", "fit"]);
    let _ = writeln!(
        svg,
        r#"<text class="rate" x="{}" y="{}">{}</text>"#,
        MARGIN + 10.0,
        H - MARGIN - 10.0,
        rate_label(fit.rate)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn rate_label(rate: f64) -> String {
    format!("rate = {rate:.3}")
}

/// Renders a plot of `series_file`. The spectrum plot uses the last file in
/// the sibling `spectra/` directory.
pub fn render_plot(series_file: &Path, kind: PlotKind) -> Result<String> {
    let series = read_series(series_file)?;
    match kind {
        PlotKind::Norms => norms_svg(&series),
        PlotKind::RateFit => rate_fit_svg(&series),
        PlotKind::Spectrum => {
            let dir = series_file.parent().unwrap_or(Path::new(".")).join("spectra");
            let mut files: Vec<_> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            let last = files
                .last()
                .ok_or_else(|| Error::MalformedSeries(format!("no spectra in {}", dir.display())))?;
            spectrum_svg(&read_spectrum(last)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::output::parse_series;

    fn decaying() -> Series {
        let mut text = String::from("time,l2,linf,h2,rt_min\n");
        for i in 0..20 {
            let t = 0.1 * i as f64;
            let _ = writeln!(text, "{t},{},{},{},2", (-t).exp(), 0.5 * (-t).exp(), 3.0 * (-t).exp());
        }
        parse_series(&text).unwrap()
    }

    fn polyline_ys(svg: &str) -> Vec<Vec<f64>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect()
            })
            .collect()
    }

    #[test]
    fn norms_plot_is_monotone_with_legend() {
        let svg = norms_svg(&decaying()).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("class=\"legend\""));
        for ys in polyline_ys(&svg) {
            assert!(ys.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn rate_label_matches_the_fit() {
        let s = decaying();
        let svg = rate_fit_svg(&s).unwrap();
        let t = s.column("time").unwrap();
        let e: Vec<f64> = s.column("l2").unwrap().iter().map(|v| v * v).collect();
        let fit = fit_decay_rate(&e, &t, [0.0, 1.9]).unwrap();
        assert!(svg.contains(&rate_label(fit.rate)));
        assert!(svg.contains("rate = -2.000"));
    }

    #[test]
    fn empty_series_is_malformed() {
        assert!(matches!(parse_series("time,l2,linf,h2\n"), Err(Error::MalformedSeries(_))));
        assert!(matches!(parse_series(""), Err(Error::MalformedSeries(_))));
    }
}
