//! Static top-down plot of a world and a robot path.

use std::fmt::Write;

use loconav::world::{RobotPose, WorldModel};

const PX_PER_M: f64 = 80.0;

/// Renders walls, objects (targets in red), the path, and start and end
/// markers. `y` points up in the plot.
pub fn render(
    world: &WorldModel,
    path: &[(f64, f64)],
    start: Option<&RobotPose>,
    targets: &[u32],
) -> String {
    let cs = world.cell_size();
    let w = world.width() as f64 * cs;
    let h = world.height() as f64 * cs;
    let px = |x: f64| x * PX_PER_M;
    let py = |y: f64| (h - y) * PX_PER_M;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.1} {:.1}">"#,
        px(w),
        px(h),
        px(w),
        px(h)
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect width="100%" height="100%" fill="#fafafa" stroke="#333"/>"##
    )
    .unwrap();
    for c in world.walls() {
        let x = c.x as f64 * cs;
        let y = (c.y + 1) as f64 * cs;
        writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#555"/>"##,
            px(x),
            py(y),
            px(cs),
            px(cs)
        )
        .unwrap();
    }
    for o in world.objects() {
        let fill = if targets.contains(&o.id) {
            "#d62728"
        } else {
            "#1f77b4"
        };
        let (cx, cy) = (px(o.position[0]), py(o.position[1]));
        writeln!(
            s,
            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="6" fill="{fill}"/>"#
        )
        .unwrap();
        let label: Vec<&str> = o
            .attributes
            .iter()
            .chain([&o.category])
            .map(String::as_str)
            .collect();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" font-family="sans-serif">{}</text>"#,
            cx + 8.0,
            cy + 3.0,
            escape(&label.join(" "))
        )
        .unwrap();
    }
    if path.len() > 1 {
        let pts: Vec<String> = path
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
            .collect();
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#2ca02c" stroke-width="2"/>"##,
            pts.join(" ")
        )
        .unwrap();
    }
    if let Some(p) = start {
        let (x, y) = (px(p.x), py(p.y));
        let (hx, hy) = (x + 14.0 * p.heading.cos(), y - 14.0 * p.heading.sin());
        writeln!(s, r##"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="none" stroke="#000" stroke-width="2"/>"##).unwrap();
        writeln!(s, r##"<line x1="{x:.1}" y1="{y:.1}" x2="{hx:.1}" y2="{hy:.1}" stroke="#000" stroke-width="2"/>"##).unwrap();
    }
    if let Some((x, y)) = path.last() {
        writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="8" height="8" fill="#ff7f0e"/>"##,
            px(*x) - 4.0,
            py(*y) - 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use loconav::world::{Cell, SemanticObject};
    use std::collections::BTreeSet;

    #[test]
    fn draws_every_element() {
        let walls: BTreeSet<Cell> = [Cell::new(3, 3)].into_iter().collect();
        let obj = SemanticObject {
            id: 7,
            category: "chair".into(),
            attributes: ["red".to_string()].into_iter().collect(),
            position: [1.125, 1.125],
        };
        let world = WorldModel::new(8, 8, 0.25, walls, vec![obj], 0).unwrap();
        let start = RobotPose::new(0.125, 0.125, 0.0);
        let out = render(&world, &[(0.125, 0.125), (1.0, 1.0)], Some(&start), &[7]);
        assert!(out.starts_with("<svg"));
        assert!(out.contains("#d62728"));
        assert!(out.contains("red chair"));
        assert!(out.contains("<polyline"));
        assert_eq!(out.matches("<rect").count(), 3);
    }
}
