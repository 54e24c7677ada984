//! Static figure of a planar Morse decomposition: Morse sets in full color,
//! regions of attraction of minimal nodes tinted, Hasse diagram on the right.

use std::fmt::Write;

use switchmorse::grid::CubicalGrid;
use switchmorse::morse::MorseAnalysis;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const MAP_PX: f64 = 600.0;
const INSET_PX: f64 = 220.0;
const MARGIN: f64 = 20.0;

pub fn color(node: usize) -> &'static str {
    PALETTE[node % PALETTE.len()]
}

#[derive(Clone, Copy, PartialEq)]
enum Paint {
    None,
    Set(usize),
    Basin(usize),
}

/// Per-cell paint: a Morse set wins over a basin.
fn paint(grid: &CubicalGrid, analysis: &MorseAnalysis) -> Vec<Paint> {
    let mut p = vec![Paint::None; grid.num_cells()];
    for q in analysis.graph.minimal_nodes() {
        for &c in &analysis.roas[q] {
            p[c] = Paint::Basin(q);
        }
    }
    for n in &analysis.graph.nodes {
        for &c in &n.cells {
            p[c] = Paint::Set(n.id);
        }
    }
    p
}

/// Longest downward path in the Hasse diagram, so minimal nodes sit at 0.
fn levels(analysis: &MorseAnalysis) -> Vec<usize> {
    let m = analysis.graph.num_nodes();
    let mut level = vec![0usize; m];
    // node ids follow a topological order of the condensation only loosely,
    // so relax until stable (at most m rounds)
    for _ in 0..m {
        let mut changed = false;
        for &(up, low) in &analysis.graph.hasse_edges {
            if level[up] < level[low] + 1 {
                level[up] = level[low] + 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    level
}

/// Returns `None` unless the grid is planar.
pub fn render(grid: &CubicalGrid, analysis: &MorseAnalysis, title: &str) -> Option<String> {
    if grid.dim() != 2 {
        return None;
    }
    let (nx, ny) = (grid.subdivisions[0], grid.subdivisions[1]);
    let (cw, ch) = (MAP_PX / nx as f64, MAP_PX / ny as f64);
    let width = MAP_PX + INSET_PX + 3.0 * MARGIN;
    let height = MAP_PX + 2.0 * MARGIN + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}">{}</text>"#, MARGIN, escape(title));
    let top = MARGIN + 20.0;
    let _ = writeln!(s, r#"<g transform="translate({MARGIN},{top})">"#);
    let p = paint(grid, analysis);
    // one rectangle per horizontal run of equal paint
    for j in 0..ny {
        let y = MAP_PX - (j + 1) as f64 * ch;
        let mut i = 0;
        while i < nx {
            let here = p[j * nx + i];
            let mut k = i + 1;
            while k < nx && p[j * nx + k] == here {
                k += 1;
            }
            let (fill, opacity) = match here {
                Paint::None => ("", 0.0),
                Paint::Set(n) => (color(n), 1.0),
                Paint::Basin(n) => (color(n), 0.3),
            };
            if opacity > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}" fill-opacity="{opacity}"/>"#,
                    i as f64 * cw,
                    y,
                    (k - i) as f64 * cw,
                    ch
                );
            }
            i = k;
        }
    }
    let _ = writeln!(s, r##"<rect width="{MAP_PX}" height="{MAP_PX}" fill="none" stroke="#333"/>"##);
    let d = &grid.domain;
    let _ = writeln!(
        s,
        r#"<text x="0" y="{:.1}">({}, {})</text><text x="{MAP_PX}" y="{:.1}" text-anchor="end">({}, {})</text>"#,
        MAP_PX + 14.0,
        d.lower[0],
        d.lower[1],
        -4.0,
        d.upper[0],
        d.upper[1]
    );
    s.push_str("</g>\n");
    hasse_inset(&mut s, analysis, MAP_PX + 2.0 * MARGIN, top);
    s.push_str("</svg>\n");
    Some(s)
}

fn hasse_inset(s: &mut String, analysis: &MorseAnalysis, x0: f64, y0: f64) {
    let level = levels(analysis);
    let depth = level.iter().copied().max().unwrap_or(0);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); depth + 1];
    for (node, &l) in level.iter().enumerate() {
        rows[l].push(node);
    }
    let row_h = if depth == 0 { 0.0 } else { (MAP_PX * 0.5 - 40.0) / depth as f64 };
    let mut pos = vec![(0.0, 0.0); level.len()];
    for (l, row) in rows.iter().enumerate() {
        let step = INSET_PX / (row.len() + 1) as f64;
        for (k, &node) in row.iter().enumerate() {
            pos[node] = (x0 + step * (k + 1) as f64, y0 + 20.0 + (depth - l) as f64 * row_h);
        }
    }
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y0}" width="{INSET_PX}" height="{:.1}" fill="none" stroke="#999"/>"##,
        MAP_PX * 0.5
    );
    for &(up, low) in &analysis.graph.hasse_edges {
        let (a, b) = (pos[up], pos[low]);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##,
            a.0, a.1, b.0, b.1
        );
    }
    for n in &analysis.graph.nodes {
        let (x, y) = pos[n.id];
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="9" fill="{}"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" fill="white">{}</text>"#,
            color(n.id),
            y + 4.0,
            n.id
        );
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use switchmorse::grid::Cuboid;
    use switchmorse::outer::CellMap;

    fn analysis_of(images: Vec<Vec<usize>>, grid: &CubicalGrid) -> MorseAnalysis {
        let n = images.len();
        let map = CellMap::new(grid.clone(), "test", serde_json::Value::Null, images, vec![false; n]).unwrap();
        MorseAnalysis::compute(&map).unwrap()
    }

    #[test]
    fn planar_figure_has_sets_and_inset() {
        let grid = CubicalGrid::new(Cuboid::square(0.0, 1.0, 2), vec![2, 2]).unwrap();
        // cell 3 repels into 0, which is fixed; 1 and 2 fall into 0
        let a = analysis_of(vec![vec![0], vec![0], vec![0], vec![0, 3]], &grid);
        let svg = render(&grid, &a, "a <b>").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches("<circle").count(), a.graph.num_nodes());
        assert_eq!(svg.matches("<line").count(), a.graph.hasse_edges.len());
        assert!(svg.contains(r#"fill-opacity="0.3""#));
        assert_eq!(render(&grid, &a, "x").unwrap(), svg.replace("a &lt;b&gt;", "x"));
    }

    #[test]
    fn non_planar_grid_is_skipped() {
        let grid = CubicalGrid::new(Cuboid::square(0.0, 1.0, 3), vec![1, 1, 1]).unwrap();
        let a = analysis_of(vec![vec![0]], &grid);
        assert!(render(&grid, &a, "").is_none());
    }

    #[test]
    fn levels_put_minimal_nodes_at_the_bottom() {
        let grid = CubicalGrid::new(Cuboid::square(0.0, 1.0, 2), vec![3, 1]).unwrap();
        let a = analysis_of(vec![vec![0, 1], vec![1, 2], vec![2]], &grid);
        let l = levels(&a);
        for n in &a.graph.nodes {
            assert_eq!(n.minimal, l[n.id] == 0);
        }
        assert_eq!(l.iter().max(), Some(&2));
    }
}
