//! SVG explanation figures: the query beside the prototypes it matched, with
//! matched keypoints joined by lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use base64::Engine as _;

use crate::classifier::Prediction;
use crate::error::{KccError, Result};
use crate::gallery::PrototypeGallery;
use crate::keypoints::Keypoint;
use crate::matching::Match;

/// Match colors, cycled by match index.
pub const PALETTE: [&str; 10] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45", "#469990", "#9a6324",
];

const MARGIN: f64 = 16.0;
const HEADER: f64 = 40.0;
const GAP: f64 = 32.0;
const CAPTION: f64 = 22.0;
const MARKER_R: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Display height of every panel in SVG units.
    pub panel_height: f64,
    /// Inline images as base64 data URIs instead of linking them.
    pub embed_images: bool,
    pub show_class_names: bool,
    /// Draw only matches of the predicted class.
    pub predicted_only: bool,
    /// Draw unmatched keypoints of the shown images as faint markers.
    pub dim_unmatched: bool,
    /// Directory that relative image paths resolve against.
    pub image_root: PathBuf,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            panel_height: 200.0,
            embed_images: false,
            show_class_names: false,
            predicted_only: false,
            dim_unmatched: false,
            image_root: PathBuf::from("."),
        }
    }
}

/// Text labels per `(image_id, segment_id)`.
pub type KeypointLabels = BTreeMap<(String, u32), String>;

/// Reads `{"image_id": {"segment_id": "label"}}`.
pub fn parse_labels(json: &str) -> Result<KeypointLabels> {
    let raw: BTreeMap<String, BTreeMap<String, String>> =
        serde_json::from_str(json).map_err(|e| KccError::Config(format!("labels: {e}")))?;
    let mut out = KeypointLabels::new();
    for (image, segs) in raw {
        for (seg, label) in segs {
            let seg: u32 = seg
                .parse()
                .map_err(|_| KccError::Config(format!("labels: bad segment id `{seg}` for `{image}`")))?;
            out.insert((image.clone(), seg), label);
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

struct Panel<'a> {
    image_id: &'a str,
    href: String,
    x: f64,
    y: f64,
    scale: f64,
    width: f64,
    height: f64,
    caption: String,
    keypoints: &'a [Keypoint],
    is_query: bool,
}

impl Panel<'_> {
    fn point(&self, kp: &Keypoint) -> (f64, f64) {
        let (row, col) = kp.centroid_input;
        (self.x + col * self.scale, self.y + row * self.scale)
    }

    fn keypoint(&self, segment_id: u32) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.segment_id == segment_id)
    }
}

fn resolve_href(image_id: &str, rel: Option<&str>, options: &RenderOptions) -> Result<String> {
    let rel = rel.ok_or_else(|| KccError::MissingImage {
        image_id: image_id.to_string(),
        path: PathBuf::new(),
    })?;
    let full = options.image_root.join(rel);
    if !full.is_file() {
        return Err(KccError::MissingImage {
            image_id: image_id.to_string(),
            path: full,
        });
    }
    if options.embed_images {
        let bytes = std::fs::read(&full).map_err(|e| KccError::io(&full, e))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        Ok(format!("data:{};base64,{b64}", mime_for(&full)))
    } else {
        Ok(rel.to_string())
    }
}

/// Renders `pred` as a standalone SVG 1.1 document.
///
/// Panels: the query first, then every prototype with at least one drawn
/// match, most matches first (ties by image id). Output is a pure function of
/// the inputs.
pub fn render_explanation(
    pred: &Prediction,
    gallery: &PrototypeGallery,
    image_paths: &BTreeMap<String, String>,
    labels: Option<&KeypointLabels>,
    options: &RenderOptions,
) -> Result<String> {
    let drawn: Vec<&Match> = pred
        .match_set
        .matches
        .iter()
        .filter(|m| !options.predicted_only || Some(m.class_label) == pred.predicted_class)
        .collect();

    let mut per_proto: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &drawn {
        *per_proto.entry(m.prototype_image_id.as_str()).or_default() += 1;
    }
    let mut proto_order: Vec<(&str, usize)> = per_proto.into_iter().collect();
    proto_order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let ph = options.panel_height;
    let top = MARGIN + HEADER;
    let mut panels = Vec::with_capacity(proto_order.len() + 1);
    let (qh, qw) = pred.query_size;
    let q_scale = ph / qh.max(1) as f64;
    let q_path = image_paths.get(&pred.query_image_id).map(String::as_str);
    panels.push(Panel {
        image_id: &pred.query_image_id,
        href: resolve_href(&pred.query_image_id, q_path, options)?,
        x: MARGIN,
        y: top,
        scale: q_scale,
        width: qw as f64 * q_scale,
        height: ph,
        caption: "query".into(),
        keypoints: &pred.query_keypoints,
        is_query: true,
    });
    let mut x = MARGIN + qw as f64 * q_scale + GAP;
    for (k, (id, count)) in proto_order.iter().enumerate() {
        let record = gallery
            .record(id)
            .ok_or_else(|| KccError::Invalid(format!("matched prototype `{id}` not in gallery")))?;
        let rel = image_paths.get(*id).or(record.image_path.as_ref()).map(String::as_str);
        let scale = ph / record.orig_h.max(1) as f64;
        let width = record.orig_w as f64 * scale;
        let mut caption = format!("prototype {} · {count} match{}", k + 1, if *count == 1 { "" } else { "es" });
        if options.show_class_names {
            if let Some(name) = gallery.classes.get(record.class_label as usize) {
                caption.push_str(&format!(" · {name}"));
            }
        }
        panels.push(Panel {
            image_id: id,
            href: resolve_href(id, rel, options)?,
            x,
            y: top,
            scale,
            width,
            height: ph,
            caption,
            keypoints: &record.keypoints,
            is_query: false,
        });
        x += width + GAP;
    }
    let total_w = x - GAP + MARGIN;
    let total_h = top + ph + CAPTION + MARGIN;
    let panel_of: BTreeMap<&str, usize> = panels.iter().enumerate().skip(1).map(|(i, p)| (p.image_id, i)).collect();

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" version="1.1" width="{total_w:.2}" height="{total_h:.2}" viewBox="0 0 {total_w:.2} {total_h:.2}">"#
    );
    let _ = writeln!(
        svg,
        r#"<style>text{{font-family:sans-serif;font-size:13px;fill:#222}}.label{{font-size:11px;paint-order:stroke;stroke:#fff;stroke-width:3px}}.banner{{font-size:18px;fill:#b00}}</style>"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{total_w:.2}" height="{total_h:.2}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text class="summary" x="{MARGIN:.2}" y="{:.2}">{}</text>"#,
        MARGIN + 14.0,
        escape(&summary_line(pred, gallery, options.show_class_names))
    );

    for (i, p) in panels.iter().enumerate() {
        let _ = writeln!(svg, r#"<g class="panel" id="panel-{i}">"#);
        let _ = writeln!(
            svg,
            r#"<image x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" preserveAspectRatio="none" xlink:href="{}"/>"#,
            p.x,
            p.y,
            p.width,
            p.height,
            escape(&p.href)
        );
        let _ = writeln!(
            svg,
            r##"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444" stroke-width="1"/>"##,
            p.x, p.y, p.width, p.height
        );
        let _ = writeln!(
            svg,
            r#"<text class="caption" x="{:.2}" y="{:.2}">{}</text>"#,
            p.x,
            p.y + p.height + 16.0,
            escape(&p.caption)
        );
        let _ = writeln!(svg, "</g>");
    }

    if pred.abstained || drawn.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text class="banner" x="{:.2}" y="{:.2}">no matches</text>"#,
            MARGIN + 8.0,
            top + 24.0
        );
    }

    if options.dim_unmatched {
        for p in &panels {
            for kp in p.keypoints {
                let matched = drawn.iter().any(|m| {
                    if p.is_query {
                        m.query_segment_id == kp.segment_id
                    } else {
                        m.prototype_image_id == p.image_id && m.prototype_segment_id == kp.segment_id
                    }
                });
                if !matched {
                    let (cx, cy) = p.point(kp);
                    let _ = writeln!(
                        svg,
                        r##"<circle class="marker-dim" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#888888" fill-opacity="0.5" stroke="#ffffff" stroke-width="1"/>"##,
                        MARKER_R * 0.7
                    );
                }
            }
        }
    }

    let mut endpoints = Vec::with_capacity(drawn.len());
    for m in &drawn {
        let q = &panels[0];
        let qk = q
            .keypoint(m.query_segment_id)
            .ok_or_else(|| KccError::Invalid(format!("query keypoint {} missing", m.query_segment_id)))?;
        let p = &panels[panel_of[m.prototype_image_id.as_str()]];
        let pk = p.keypoint(m.prototype_segment_id).ok_or_else(|| {
            KccError::Invalid(format!(
                "prototype keypoint {}/{} missing",
                m.prototype_image_id, m.prototype_segment_id
            ))
        })?;
        endpoints.push((q.point(qk), p.point(pk), m));
    }
    for (idx, ((x1, y1), (x2, y2), _)) in endpoints.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<line class="match" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{}" stroke-width="1.5" stroke-opacity="0.85"/>"#,
            PALETTE[idx % PALETTE.len()]
        );
    }
    for (idx, (a, b, m)) in endpoints.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let ends = [
            (*a, pred.query_image_id.as_str(), m.query_segment_id),
            (*b, m.prototype_image_id.as_str(), m.prototype_segment_id),
        ];
        for ((cx, cy), image, seg) in ends {
            let _ = writeln!(
                svg,
                r##"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="{MARKER_R:.2}" fill="{color}" stroke="#ffffff" stroke-width="1.5"/>"##
            );
            if let Some(text) = labels.and_then(|l| l.get(&(image.to_string(), seg))) {
                let _ = writeln!(
                    svg,
                    r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
                    cx + MARKER_R + 2.0,
                    cy - MARKER_R - 2.0,
                    escape(text)
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn summary_line(pred: &Prediction, gallery: &PrototypeGallery, show_names: bool) -> String {
    let Some(class) = pred.predicted_class else {
        return format!("no prediction ({})", pred.diagnostic.as_deref().unwrap_or("abstained"));
    };
    let score = pred.scores.get(&class).copied().unwrap_or(0.0);
    let who = match gallery.classes.get(class as usize) {
        Some(name) if show_names => format!("prediction: {name}"),
        _ => "prediction".to_string(),
    };
    format!(
        "{who} · score {score:.2} · {} matches · {} prototype image{} to inspect",
        pred.match_set.len(),
        pred.complexity,
        if pred.complexity == 1 { "" } else { "s" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"<a & "b">"#), "&lt;a &amp; &quot;b&quot;&gt;");
    }

    #[test]
    fn labels_parse() {
        let l = parse_labels(r#"{"q": {"1": "beak", "3": "wing"}}"#).unwrap();
        assert_eq!(l[&("q".to_string(), 3)], "wing");
        assert!(parse_labels(r#"{"q": {"x": "beak"}}"#).is_err());
    }

    #[test]
    fn mime_types() {
        assert_eq!(mime_for(Path::new("a.PNG")), "image/png");
        assert_eq!(mime_for(Path::new("a.jpeg")), "image/jpeg");
    }
}
