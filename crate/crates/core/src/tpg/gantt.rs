//! Gantt rendering of schedules: one lane per robot, plain text or SVG.

use std::collections::BTreeMap;

use crate::ids::{DurationMs, RobotId, TimeMs};
use crate::tpg::{earliest_schedule, Tpg};

/// One scheduled bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub start_ms: TimeMs,
    pub end_ms: TimeMs,
}

/// A renderable schedule: per-robot lanes of labeled bars.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GanttChart {
    pub title: String,
    pub lanes: BTreeMap<RobotId, Vec<Bar>>,
}

impl GanttChart {
    /// Earliest-start schedule of a temporal plan graph.
    pub fn from_tpg(title: &str, tpg: &Tpg) -> GanttChart {
        let times = earliest_schedule(tpg);
        let mut lanes: BTreeMap<RobotId, Vec<Bar>> = BTreeMap::new();
        for robot in tpg.sources.keys() {
            lanes.entry(robot.clone()).or_default();
        }
        for node in &tpg.nodes {
            let (start_ms, end_ms) = times[node.id];
            lanes.entry(node.robot.clone()).or_default().push(Bar {
                label: node.skill.clone(),
                start_ms,
                end_ms,
            });
        }
        for bars in lanes.values_mut() {
            bars.sort_by_key(|b| (b.start_ms, b.end_ms, b.label.clone()));
        }
        GanttChart {
            title: title.to_string(),
            lanes,
        }
    }

    pub fn span_ms(&self) -> DurationMs {
        self.lanes
            .values()
            .flat_map(|bars| bars.iter().map(|b| b.end_ms))
            .max()
            .unwrap_or(0)
    }

    pub fn bar_count(&self) -> usize {
        self.lanes.values().map(|b| b.len()).sum()
    }
}

/// Fixed-width text rendering; deterministic for equal inputs.
pub fn render_text(chart: &GanttChart) -> String {
    const WIDTH: usize = 100;
    let span = chart.span_ms().max(1);
    let mut out = String::new();
    out.push_str(&format!(
        "{} (span {:.3}s)\n",
        chart.title,
        span as f64 / 1000.0
    ));
    for (robot, bars) in &chart.lanes {
        let mut row = vec![b'.'; WIDTH];
        for bar in bars {
            let a = (bar.start_ms as usize * (WIDTH - 1)) / span as usize;
            let b = ((bar.end_ms as usize * (WIDTH - 1)) / span as usize).max(a);
            let ch = bar.label.bytes().next().unwrap_or(b'#');
            for slot in row.iter_mut().take(b + 1).skip(a) {
                *slot = ch;
            }
        }
        out.push_str(&format!("{robot:>4} |{}|\n", String::from_utf8_lossy(&row)));
        for bar in bars {
            out.push_str(&format!(
                "      {:>10} .. {:<10}  {}\n",
                format!("{:.3}s", bar.start_ms as f64 / 1000.0),
                format!("{:.3}s", bar.end_ms as f64 / 1000.0),
                bar.label
            ));
        }
    }
    out
}

/// Minimal self-contained SVG; byte-identical for equal inputs.
pub fn render_svg(chart: &GanttChart) -> String {
    const LANE_H: u64 = 28;
    const BAR_H: u64 = 20;
    const LEFT: u64 = 60;
    const WIDTH: u64 = 900;
    const TOP: u64 = 30;
    let span = chart.span_ms().max(1);
    let lanes = chart.lanes.len() as u64;
    let height = TOP + lanes * LANE_H + 20;
    let scale = |t: TimeMs| LEFT + t * (WIDTH - LEFT - 10) / span;

    let palette = [
        "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    ];
    let mut color_of: BTreeMap<String, &str> = BTreeMap::new();

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">\n"
    ));
    s.push_str("<style>text{font-family:monospace;font-size:11px}</style>\n");
    s.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"16\">{} (span {:.3}s)</text>\n",
        xml_escape(&chart.title),
        span as f64 / 1000.0
    ));
    for (i, (robot, bars)) in chart.lanes.iter().enumerate() {
        let y = TOP + i as u64 * LANE_H;
        s.push_str(&format!(
            "<text x=\"4\" y=\"{}\">{}</text>\n",
            y + BAR_H - 5,
            xml_escape(robot.as_str())
        ));
        s.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            y + BAR_H + 2,
            WIDTH - 10,
            y + BAR_H + 2
        ));
        for bar in bars {
            let x0 = scale(bar.start_ms);
            let x1 = scale(bar.end_ms).max(x0 + 1);
            let idx = color_of.len() % palette.len();
            let color = *color_of.entry(bar.label.clone()).or_insert(palette[idx]);
            s.push_str(&format!(
                "<rect x=\"{x0}\" y=\"{y}\" width=\"{}\" height=\"{BAR_H}\" fill=\"{color}\" stroke=\"#333\"><title>{} {:.3}s-{:.3}s</title></rect>\n",
                x1 - x0,
                xml_escape(&bar.label),
                bar.start_ms as f64 / 1000.0,
                bar.end_ms as f64 / 1000.0
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> GanttChart {
        let mut lanes = BTreeMap::new();
        lanes.insert(
            RobotId::from("r1"),
            vec![
                Bar { label: "pick".into(), start_ms: 0, end_ms: 3000 },
                Bar { label: "transit".into(), start_ms: 3000, end_ms: 4000 },
            ],
        );
        lanes.insert(
            RobotId::from("r2"),
            vec![Bar { label: "support_up".into(), start_ms: 1000, end_ms: 3500 }],
        );
        GanttChart { title: "demo".into(), lanes }
    }

    #[test]
    fn renders_every_bar_once() {
        let c = chart();
        let text = render_text(&c);
        assert!(text.contains("r1"));
        assert!(text.contains("support_up"));
        let svg = render_svg(&c);
        assert_eq!(svg.matches("<rect").count(), c.bar_count());
    }

    #[test]
    fn rendering_is_deterministic() {
        let c = chart();
        assert_eq!(render_text(&c), render_text(&c));
        assert_eq!(render_svg(&c), render_svg(&c));
    }

    #[test]
    fn empty_chart_renders_headers_only() {
        let c = GanttChart { title: "empty".into(), lanes: BTreeMap::new() };
        let text = render_text(&c);
        assert!(text.starts_with("empty"));
        let svg = render_svg(&c);
        assert!(svg.contains("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 0);
    }
}
