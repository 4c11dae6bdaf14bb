//! Node diagrams: each selected node drawn at (node mean, node size) with area
//! proportional to its weight, and lines between nested nodes.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Value};
use crate::error::Result;
use crate::estimator::{HarvestModel, SELECTED_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotNode {
    /// Node index in the model.
    pub id: usize,
    /// Node mean in response units.
    pub x: f64,
    /// Number of training rows in the node.
    pub y: usize,
    /// Node weight.
    pub area: f64,
    pub label: String,
    pub highlighted: bool,
}

/// `from` is a proper subset of `to` with no plotted node in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotEdge {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlot {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_name: Option<String>,
    pub nodes: Vec<PlotNode>,
    pub edges: Vec<PlotEdge>,
    /// Ids of the plotted nodes containing the query observation.
    pub highlights: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<f64>,
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut it = b.iter();
    a.iter().all(|x| it.by_ref().any(|y| y == x))
}

/// Collect the selected nodes. Edges need the training data to rebuild member
/// lists; without it the plot has no edges.
pub fn node_plot(model: &HarvestModel, train: Option<&Dataset>, query: Option<&[Value]>) -> Result<NodePlot> {
    let selected = model.selected_nodes(SELECTED_TOL);
    let active = query.map(|obs| model.active_nodes(obs)).transpose()?;
    let nodes: Vec<PlotNode> = selected
        .iter()
        .map(|s| PlotNode {
            id: s.index,
            x: s.rule.mean,
            y: s.rule.size,
            area: s.weight,
            label: s.rule.describe(&model.schema),
            highlighted: active.as_ref().is_some_and(|a| a.contains(&s.index)),
        })
        .collect();

    let mut edges = Vec::new();
    if let Some(train) = train {
        let full = model.training_nodes(train)?;
        let members: Vec<&[usize]> = nodes.iter().map(|p| full.nodes()[p.id].members.as_slice()).collect();
        let k = nodes.len();
        let sub: Vec<Vec<bool>> = (0..k)
            .map(|a| (0..k).map(|b| a != b && members[a].len() < members[b].len() && is_subset(members[a], members[b])).collect())
            .collect();
        for a in 0..k {
            for b in 0..k {
                if sub[a][b] && !(0..k).any(|c| sub[a][c] && sub[c][b]) {
                    edges.push(PlotEdge { from: nodes[a].id, to: nodes[b].id });
                }
            }
        }
        edges.sort_by_key(|e| (e.from, e.to));
    }
    let highlights = nodes.iter().filter(|p| p.highlighted).map(|p| p.id).collect();
    let prediction = query.map(|obs| model.predict(obs)).transpose()?;
    Ok(NodePlot {
        format_version: 1,
        response_name: model.response_name.clone(),
        nodes,
        edges,
        highlights,
        prediction,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const MAX_RADIUS: f64 = 30.0;

/// Render as SVG. Node size is on a log scale.
pub fn render_svg(plot: &NodePlot) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if plot.nodes.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (mut x_lo, mut x_hi) = plot.nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    if x_hi - x_lo < 1e-12 {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    let pad = 0.08 * (x_hi - x_lo);
    let (x_lo, x_hi) = (x_lo - pad, x_hi + pad);
    let sizes = plot.nodes.iter().map(|p| (p.y.max(1) as f64).log10());
    let (mut y_lo, mut y_hi) = sizes.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.08 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |size: usize| HEIGHT - MARGIN - ((size.max(1) as f64).log10() - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let max_area = plot.nodes.iter().map(|p| p.area).fold(0.0, f64::max);
    let radius = |a: f64| if max_area > 0.0 { MAX_RADIUS * (a / max_area).sqrt() } else { 0.0 };

    // axes
    let _ = writeln!(
        out,
        r##"<g stroke="#444"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}"/></g>"##,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    for i in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(x), HEIGHT - MARGIN + 16.0, crate::nodegen::fmt_number((x * 1e3).round() / 1e3));
    }
    let mut tick = 10f64.powf(y_lo.ceil());
    while tick.log10() <= y_hi {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(tick as usize) + 4.0, tick);
        tick *= 10.0;
    }
    let response = plot.response_name.as_deref().unwrap_or("response");
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">node mean of {}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(response));
    let _ = writeln!(out, r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">node size</text>"#, HEIGHT / 2.0);

    let pos = |id: usize| plot.nodes.iter().find(|p| p.id == id).map(|p| (sx(p.x), sy(p.y)));
    out.push_str("<g stroke=\"#999\" stroke-width=\"1\">\n");
    for e in &plot.edges {
        if let (Some((x1, y1)), Some((x2, y2))) = (pos(e.from), pos(e.to)) {
            let _ = writeln!(out, r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}"/>"#);
        }
    }
    out.push_str("</g>\n");
    if let Some(p) = plot.prediction {
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{t}" x2="{x:.1}" y2="{b}" stroke="#c0392b" stroke-dasharray="4 3"/>"##,
            x = sx(p),
            t = MARGIN,
            b = HEIGHT - MARGIN
        );
    }
    for p in &plot.nodes {
        let fill = if p.highlighted { "#f5c77e" } else { "#35506b" };
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="{:.2}" fill="{fill}" fill-opacity="0.85" stroke="#222" stroke-width="0.5"><title>{} (weight {:.4}, mean {}, size {})</title></circle>"##,
            sx(p.x),
            sy(p.y),
            radius(p.area),
            escape(&p.label),
            p.area,
            crate::nodegen::fmt_number(p.x),
            p.y
        );
    }
    for p in plot.nodes.iter().filter(|p| p.highlighted) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            sx(p.x) + radius(p.area) + 3.0,
            sy(p.y) + 4.0,
            escape(&p.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
