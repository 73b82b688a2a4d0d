//! Dependency-free SVG charts: overlaid histograms and an annotated heatmap.
//!
//! Output is plain text with fixed numeric precision, so identical inputs
//! always give identical bytes.

use std::fmt::Write;

use crate::analysis::{Bin, RankCorrelationStudy};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Overlaid step histograms sharing one set of bin edges.
pub fn histogram_chart(title: &str, x_label: &str, series: &[(&str, &[Bin])]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let x_lo = series.iter().flat_map(|(_, b)| b.first()).map(|b| b.lower).fold(f64::INFINITY, f64::min);
    let x_hi = series.iter().flat_map(|(_, b)| b.last()).map(|b| b.upper).fold(f64::NEG_INFINITY, f64::max);
    let y_hi = series
        .iter()
        .flat_map(|(_, b)| b.iter().map(|bin| bin.value))
        .fold(0.0, f64::max);
    let (x_lo, x_hi) = if x_lo < x_hi { (x_lo, x_hi) } else { (0.0, 1.0) };
    let y_hi = if y_hi > 0.0 { y_hi } else { 1.0 };
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| top + ph - y / y_hi * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{left:.1},{top:.1}V{:.1}H{:.1}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for t in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * t as f64 / 4.0;
        let fy = y_hi * t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            sx(fx),
            top + ph + 16.0,
            fx
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(x_label)
    );

    for (s, (name, bins)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut d = String::new();
        if let Some(first) = bins.first() {
            let _ = write!(d, "M{:.2},{:.2}", sx(first.lower), sy(0.0));
        }
        for bin in bins.iter() {
            let _ = write!(d, "V{:.2}H{:.2}", sy(bin.value), sx(bin.upper));
        }
        if !bins.is_empty() {
            let _ = write!(d, "V{:.2}", sy(0.0));
        }
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="{color}" fill-opacity="0.25" stroke="{color}" stroke-width="1.5"/>"#
        );
        let ly = top + 14.0 + 16.0 * s as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw - 140.0,
            ly - 9.0,
            left + pw - 125.0,
            ly,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn heat_color(rho: f64) -> String {
    // white at 0, deep blue at 1, deep red at -1
    let t = rho.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0 - 222.0 * t, 255.0 - 153.0 * t, 255.0 - 75.0 * t)
    } else {
        (255.0 + 41.0 * t, 255.0 + 215.0 * t, 255.0 + 215.0 * t)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Rank-correlation heatmap with every cell annotated to two decimals.
pub fn heatmap(study: &RankCorrelationStudy, title: &str) -> String {
    let n = study.matrix.len();
    let cell = 48.0;
    let (left, top) = (50.0, 50.0);
    let side = cell * n as f64;
    let (w, h) = (left + side + 20.0, top + side + 20.0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        left + side / 2.0,
        escape(title)
    );
    for (a, k) in study.ks().enumerate() {
        let c = a as f64 * cell + cell / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k'={k}</text>"#,
            left + c,
            top - 6.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">k={k}</text>"#,
            left - 4.0,
            top + c + 4.0
        );
    }
    for (a, row) in study.matrix.iter().enumerate() {
        for (b, &rho) in row.iter().enumerate() {
            let (x, y) = (left + b as f64 * cell, top + a as f64 * cell);
            let ink = if rho.abs() > 0.6 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{}"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{rho:.2}</text>"#,
                heat_color(rho),
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
