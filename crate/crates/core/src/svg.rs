//! Minimal self-contained SVG line and bar charts.

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn frame(title: &str, xlabel: &str, ylabel: &str, ylo: f64, yhi: f64, body: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
            "<line x1=\"{p}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{p}\" y1=\"{p}\" x2=\"{p}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<text x=\"{cx}\" y=\"{xl}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{xlabel}</text>\n",
            "<text x=\"14\" y=\"{cy}\" transform=\"rotate(-90 14 {cy})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{ylabel}</text>\n",
            "<text x=\"{tl}\" y=\"{b}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{ylo:.3}</text>\n",
            "<text x=\"{tl}\" y=\"{tp}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{yhi:.3}</text>\n",
            "{body}</svg>\n"
        ),
        w = W,
        h = H,
        p = PAD,
        r = W - PAD / 2.0,
        b = H - PAD,
        cx = W / 2.0,
        cy = H / 2.0,
        xl = H - 16.0,
        tl = PAD - 4.0,
        tp = PAD + 4.0,
        title = escape(title),
        xlabel = escape(xlabel),
        ylabel = escape(ylabel),
        ylo = ylo,
        yhi = yhi,
        body = body,
    )
}

fn sx(x: f64, lo: f64, hi: f64) -> f64 {
    PAD + (x - lo) / (hi - lo) * (W - 1.5 * PAD)
}

fn sy(y: f64, lo: f64, hi: f64) -> f64 {
    H - PAD - (y - lo) / (hi - lo) * (H - 2.0 * PAD)
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (xlo, xhi) = range(points.iter().map(|p| p.0));
    let (ylo, yhi) = range(points.iter().map(|p| p.1));
    let pts: Vec<String> = points
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x, xlo, xhi), sy(y, ylo, yhi)))
        .collect();
    let mut body = format!("<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"{}\"/>\n", pts.join(" "));
    body.push_str(&format!(
        "<text x=\"{p}\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{xlo}</text>\n<text x=\"{r}\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{xhi}</text>\n",
        p = PAD,
        r = W - PAD / 2.0,
        y = H - PAD + 14.0,
    ));
    frame(title, xlabel, ylabel, ylo, yhi, &body)
}

pub fn bar_chart(title: &str, xlabel: &str, ylabel: &str, bars: &[(String, f64)]) -> String {
    let (_, yhi) = range(bars.iter().map(|b| b.1).chain([0.0]));
    let ylo = 0.0;
    let n = bars.len().max(1) as f64;
    let slot = (W - 1.5 * PAD) / n;
    let mut body = String::new();
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.1;
        let top = sy(v.max(0.0), ylo, yhi);
        body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#1f5fa8\"/>\n<text x=\"{tx:.2}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">{l}</text>\n",
            w = slot * 0.8,
            h = (H - PAD - top).max(0.0),
            tx = x + slot * 0.4,
            ty = H - PAD + 12.0,
            l = escape(label),
        ));
    }
    frame(title, xlabel, ylabel, ylo, yhi, &body)
}
