//! Static, self-contained HTML heat maps of word-level aspect assignments.

use std::fmt::Write as _;

use mtm_core::rationale::WordAssignment;

/// Aspect colors in order: red, blue, purple, green, then four more.
pub const PALETTE: [(u8, u8, u8); 8] = [
    (214, 39, 40),
    (31, 119, 180),
    (148, 103, 189),
    (44, 160, 44),
    (255, 127, 14),
    (23, 190, 207),
    (140, 86, 75),
    (227, 119, 194),
];

/// Colors for `t` aspects. Past the fixed palette, hues step by the golden
/// angle so the extension is deterministic.
pub fn palette(t: usize) -> Vec<(u8, u8, u8)> {
    if t > PALETTE.len() {
        log::warn!("{t} aspects exceed the {}-color palette; extending it", PALETTE.len());
    }
    (0..t)
        .map(|i| {
            PALETTE.get(i).copied().unwrap_or_else(|| {
                let hue = ((i - PALETTE.len()) as f64 * 137.507_764) % 360.0;
                hsl_to_rgb(hue, 0.55, 0.5)
            })
        })
        .collect()
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to(r), to(g), to(b))
}

/// Shade opacity for a confidence value.
pub fn opacity(confidence: f64) -> f64 {
    if confidence.is_nan() {
        0.0
    } else {
        confidence.clamp(0.0, 1.0)
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReportDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub words: Vec<WordAssignment>,
    pub switches: usize,
    pub labels: Option<Vec<u8>>,
    pub predictions: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct MetricTable {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct HtmlReport {
    pub title: String,
    pub aspect_names: Vec<String>,
    pub generated: String,
    pub tables: Vec<MetricTable>,
    pub documents: Vec<ReportDocument>,
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.9}\
table{border-collapse:collapse;margin:0.5em 0 1.5em}td,th{border:1px solid #bbb;padding:2px 8px;text-align:right}\
th:first-child,td:first-child{text-align:left}.doc{border-top:1px solid #ddd;padding:0.6em 0}\
.meta{color:#555;font-size:0.85em}.w{padding:1px 2px;border-radius:3px}.key{padding:1px 8px;margin-right:6px;border-radius:3px}";

fn word_span(out: &mut String, token: &str, w: &WordAssignment, colors: &[(u8, u8, u8)], names: &[String]) {
    let a = opacity(w.confidence);
    if w.aspect == 0 || a == 0.0 {
        let _ = write!(out, "<span class=\"w\">{}</span> ", escape(token));
        return;
    }
    let (r, g, b) = colors[w.aspect - 1];
    let _ = write!(
        out,
        "<span class=\"w\" style=\"background:rgba({r},{g},{b},{a:.3})\" title=\"{} {:.3}\">{}</span> ",
        escape(&names[w.aspect - 1]),
        w.confidence,
        escape(token)
    );
}

fn legend(out: &mut String, colors: &[(u8, u8, u8)], names: &[String]) {
    out.push_str("<p class=\"legend\">");
    for ((r, g, b), n) in colors.iter().zip(names) {
        let _ = write!(out, "<span class=\"key\" style=\"background:rgba({r},{g},{b},0.8)\">{}</span>", escape(n));
    }
    out.push_str("</p>\n");
}

fn labels_text(v: &[u8]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Shaded tokens of one text, for embedding in other pages.
pub fn fragment(tokens: &[String], words: &[WordAssignment], aspect_names: &[String]) -> String {
    let colors = palette(aspect_names.len());
    let mut out = String::from("<div class=\"rationale\">");
    legend(&mut out, &colors, aspect_names);
    out.push_str("<p>");
    for (t, w) in tokens.iter().zip(words) {
        word_span(&mut out, t, w, &colors, aspect_names);
    }
    out.push_str("</p></div>\n");
    out
}

pub fn render(report: &HtmlReport) -> String {
    let colors = palette(report.aspect_names.len());
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title><style>{STYLE}</style></head><body>\n",
        escape(&report.title)
    );
    let _ = writeln!(out, "<h1>{}</h1>", escape(&report.title));
    let _ = writeln!(out, "<p class=\"meta\">Generated {}</p>", escape(&report.generated));
    legend(&mut out, &colors, &report.aspect_names);
    for t in &report.tables {
        let _ = writeln!(out, "<h2>{}</h2>\n<table>", escape(&t.title));
        out.push_str("<tr>");
        for h in &t.header {
            let _ = write!(out, "<th>{}</th>", escape(h));
        }
        out.push_str("</tr>\n");
        for row in &t.rows {
            out.push_str("<tr>");
            for c in row {
                let _ = write!(out, "<td>{}</td>", escape(c));
            }
            out.push_str("</tr>\n");
        }
        out.push_str("</table>\n");
    }
    out.push_str("<h2>Documents</h2>\n");
    for d in &report.documents {
        let _ = write!(
            out,
            "<div class=\"doc\"><p class=\"meta\">{} &middot; Aspect Changes &#9733; {}",
            escape(&d.id),
            d.switches
        );
        if let Some(l) = &d.labels {
            let _ = write!(out, " &middot; labels {}", labels_text(l));
        }
        if let Some(p) = &d.predictions {
            let _ = write!(out, " &middot; predicted {}", labels_text(p));
        }
        out.push_str("</p><p>");
        for (t, w) in d.tokens.iter().zip(&d.words) {
            word_span(&mut out, t, w, &colors, &report.aspect_names);
        }
        out.push_str("</p></div>\n");
    }
    out.push_str("</body></html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(words: Vec<WordAssignment>) -> ReportDocument {
        ReportDocument {
            id: "d<1>".into(),
            tokens: (0..words.len()).map(|i| format!("w{i}")).collect(),
            words,
            switches: 2,
            labels: Some(vec![1, 0]),
            predictions: None,
        }
    }

    fn report(d: ReportDocument) -> HtmlReport {
        HtmlReport {
            title: "t".into(),
            aspect_names: vec!["look".into(), "smell".into()],
            generated: "fixed".into(),
            tables: vec![],
            documents: vec![d],
        }
    }

    #[test]
    fn uniform_confidence_gives_uniform_shade() {
        let w = WordAssignment { aspect: 1, confidence: 0.4 };
        let html = render(&report(doc(vec![w; 4])));
        assert_eq!(html.matches("rgba(214,39,40,0.400)").count(), 4);
    }

    #[test]
    fn zero_confidence_and_irrelevant_words_are_unshaded() {
        let ws = vec![
            WordAssignment { aspect: 2, confidence: 0.0 },
            WordAssignment { aspect: 0, confidence: 0.9 },
        ];
        let html = render(&report(doc(ws)));
        assert!(!html.contains("class=\"w\" style"));
    }

    #[test]
    fn output_is_escaped_and_self_contained() {
        let html = render(&report(doc(vec![WordAssignment { aspect: 1, confidence: 1.0 }])));
        assert!(html.contains("d&lt;1&gt;"));
        assert!(!html.contains("http"));
        assert!(!html.contains("src="));
        assert!(html.contains("Aspect Changes &#9733; 2"));
        let frag = fragment(&["<script>".to_string()], &[WordAssignment { aspect: 1, confidence: 1.0 }], &["a&b".into()]);
        assert!(frag.contains("&lt;script&gt;") && frag.contains("a&amp;b"));
        assert!(!frag.contains("<script>"));
    }

    #[test]
    fn palette_extends_deterministically() {
        let p = palette(12);
        assert_eq!(p.len(), 12);
        assert_eq!(&p[..8], &PALETTE[..]);
        assert_eq!(p, palette(12));
        assert!(p[8..].iter().all(|c| !PALETTE.contains(c)));
    }

    #[test]
    fn opacity_is_clamped() {
        assert_eq!(opacity(-0.5), 0.0);
        assert_eq!(opacity(0.25), 0.25);
        assert_eq!(opacity(3.0), 1.0);
    }
}
