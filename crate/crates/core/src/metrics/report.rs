use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{avg_score, fmt_2dp, pareto_points, BenchmarkRow, ParetoPoint};
use crate::accounting::size_reduction;
use crate::error::{Error, Result};

/// Rendered report: a plain-text results table and an SVG scatter plot of
/// size reduction against average-score loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub table: String,
    pub svg: String,
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_2dp).unwrap_or_else(|| "-".into())
}

fn push_row(out: &mut String, cells: &[String], widths: &[usize]) {
    for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
        if i == 0 {
            let _ = write!(out, "{c:<w$}");
        } else {
            let _ = write!(out, "  {c:>w$}");
        }
    }
    out.push('\n');
}

fn table(out: &mut String, header: &[&str], body: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let header: Vec<String> = header.iter().map(|h| (*h).into()).collect();
    push_row(out, &header, &widths);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    push_row(out, &rule, &widths);
    for r in body {
        push_row(out, r, &widths);
    }
}

/// Builds the report for `rows` against the `baseline` scheme. Rows keep
/// their input order. Rows lacking a size or any headline score are listed
/// in the table but left out of the figure.
pub fn emit_report(rows: &[BenchmarkRow], baseline: &str) -> Result<Report> {
    let base = rows
        .iter()
        .find(|r| r.scheme == baseline)
        .ok_or_else(|| Error::MissingBaseline(baseline.into()))?;
    let base_size = base.size_mib;

    let mut out = String::new();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let reduction = match (r.size_mib, base_size) {
                (Some(s), Some(b)) => size_reduction(s, b).ok(),
                _ => None,
            };
            [
                r.gsm8k,
                r.hellaswag,
                r.ifeval_score(),
                r.mmlu,
                r.truthfulqa_mc2,
                avg_score(r).ok(),
                r.ppl,
                r.size_mib,
                reduction,
            ]
            .into_iter()
            .fold(alloc::vec![r.scheme.clone()], |mut v, x| {
                v.push(cell(x));
                v
            })
        })
        .collect();
    table(
        &mut out,
        &["Scheme", "GSM8K", "HSwag", "IFEval", "MMLU", "TQA", "Avg", "PPL", "Size MiB", "Reduction %"],
        &body,
    );

    let perf: Vec<Vec<String>> = rows
        .iter()
        .filter(|r| r.pp512.is_some() || r.tg128.is_some() || r.quant_seconds.is_some())
        .map(|r| {
            let t = |t: Option<super::Throughput>| {
                t.map(|t| alloc::format!("{} ± {}", fmt_2dp(t.mean), fmt_2dp(t.std)))
                    .unwrap_or_else(|| "-".into())
            };
            alloc::vec![r.scheme.clone(), t(r.pp512), t(r.tg128), cell(r.quant_seconds)]
        })
        .collect();
    if !perf.is_empty() {
        out.push('\n');
        table(&mut out, &["Scheme", "pp512 tok/s", "tg128 tok/s", "Quant s"], &perf);
    }

    let extra_keys: Vec<&String> = {
        let mut k: Vec<&String> = rows.iter().flat_map(|r| r.extra.keys()).collect();
        k.sort();
        k.dedup();
        k
    };
    if !extra_keys.is_empty() {
        out.push('\n');
        let mut header = alloc::vec!["Scheme"];
        header.extend(extra_keys.iter().map(|k| k.as_str()));
        let body: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| !r.extra.is_empty())
            .map(|r| {
                let mut v = alloc::vec![r.scheme.clone()];
                v.extend(extra_keys.iter().map(|k| cell(r.extra.get(*k).copied())));
                v
            })
            .collect();
        table(&mut out, &header, &body);
    }

    let complete: Vec<BenchmarkRow> = rows
        .iter()
        .filter(|r| r.size_mib.is_some() && avg_score(r).is_ok())
        .cloned()
        .collect();
    let points = if base_size.is_some() && avg_score(base).is_ok() {
        pareto_points(&complete, baseline)?
    } else {
        Vec::new()
    };
    if !points.is_empty() {
        out.push('\n');
        let body: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                alloc::vec![
                    p.scheme.clone(),
                    fmt_2dp(p.reduction),
                    fmt_2dp(p.avg_loss),
                    if p.on_frontier { "yes".into() } else { p.dominated_by.join(" ") },
                ]
            })
            .collect();
        table(&mut out, &["Scheme", "Reduction %", "AvgLoss %", "Frontier / dominated by"], &body);
    }
    Ok(Report {
        table: out,
        svg: scatter_svg(&points),
    })
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            c => o.push(c),
        }
    }
    o
}

/// Tick step from {1, 2, 5} × 10^k giving at most eight intervals.
fn tick_step(span: f64) -> f64 {
    let span = if span > 0.0 { span } else { 1.0 };
    let mut step = libm::pow(10.0, libm::floor(libm::log10(span / 8.0)));
    for m in [1.0, 2.0, 5.0, 10.0] {
        if span / (step * m) <= 8.0 {
            step *= m;
            break;
        }
    }
    step
}

fn axis_range(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let lo = values.clone().fold(0.0f64, f64::min);
    let hi = values.fold(0.0f64, f64::max);
    let step = tick_step(hi - lo);
    let lo = libm::floor(lo / step) * step;
    let mut hi = libm::ceil(hi / step) * step;
    if hi <= lo {
        hi = lo + step;
    }
    (lo, hi, step)
}

fn scatter_svg(points: &[ParetoPoint]) -> String {
    let (x0, x1, xs) = axis_range(points.iter().map(|p| p.reduction));
    let (y0, y1, ys) = axis_range(points.iter().map(|p| p.avg_loss));
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    let f = |v: f64| fmt_2dp(v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (ax, ay) = (px(x0), py(y0));
    let _ = writeln!(
        s,
        r#"<path d="M{} {} H{} M{} {} V{}" stroke="black" fill="none"/>"#,
        f(ax),
        f(ay),
        f(px(x1)),
        f(ax),
        f(ay),
        f(py(y1))
    );
    let nx = libm::round((x1 - x0) / xs) as i64;
    for i in 0..=nx {
        let v = x0 + i as f64 * xs;
        let x = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            f(x),
            f(ay),
            f(ay + 5.0),
            f(ay + 20.0),
            fmt_tick(v)
        );
    }
    let ny = libm::round((y1 - y0) / ys) as i64;
    for i in 0..=ny {
        let v = y0 + i as f64 * ys;
        let y = py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
            f(ax - 5.0),
            f(y),
            f(ax),
            f(ax - 8.0),
            f(y + 4.0),
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">reduction %</text>"#,
        f((LEFT + W - RIGHT) / 2.0),
        f(H - 15.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">AvgLoss %</text>"#,
        f((TOP + H - BOTTOM) / 2.0)
    );

    let mut front: Vec<&ParetoPoint> = points.iter().filter(|p| p.on_frontier).collect();
    front.sort_by(|a, b| a.reduction.total_cmp(&b.reduction).then(a.avg_loss.total_cmp(&b.avg_loss)));
    if !front.is_empty() {
        let pts: Vec<String> = front
            .iter()
            .map(|p| alloc::format!("{},{}", f(px(p.reduction)), f(py(p.avg_loss))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="firebrick" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }
    for p in points {
        let (x, y) = (px(p.reduction), py(p.avg_loss));
        let fill = if p.on_frontier { "firebrick" } else { "white" };
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4" fill="{fill}" stroke="black"/><text x="{}" y="{}">{}</text>"#,
            f(x),
            f(y),
            f(x + 6.0),
            f(y - 6.0),
            escape(&p.scheme)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let s = fmt_2dp(v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}
