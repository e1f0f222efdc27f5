//! Monospace text and SVG pictures of grids.

use std::fmt::Write as _;

use vpsynth_core::world::{Cell, Dir, Grid, Puzzle};

use crate::io::GridFile;

const CELL: usize = 24;
const GAP: usize = 24;

fn puzzle_panels(p: &Puzzle) -> Vec<(&'static str, &Grid)> {
    match p {
        Puzzle::Maze(g) => vec![("maze", g)],
        Puzzle::Karel { pre, post } => vec![("pregrid", pre), ("postgrid", post)],
    }
}

/// The grids in a file with their panel titles.
fn panels(file: &GridFile) -> Vec<(&'static str, &Grid)> {
    match file {
        GridFile::Task(t) => puzzle_panels(&t.puzzle),
        GridFile::Puzzle(p) => puzzle_panels(p),
        GridFile::Spec(s) => vec![("grid", &s.puzzle)],
        GridFile::Grid(g) => vec![("grid", g)],
    }
}

/// Text rendering. Karel pairs print the pregrid, a blank line, then the postgrid.
pub fn text(file: &GridFile) -> String {
    let ps = panels(file);
    let titled = ps.len() > 1;
    let mut out = String::new();
    for (i, (title, g)) in ps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if titled {
            out.push_str(title);
            out.push_str(":\n");
        }
        out.push_str(&g.to_text());
    }
    out
}

fn arrow(dir: Dir, x: f64, y: f64) -> String {
    let s = CELL as f64 * 0.35;
    let (tip, l, r) = match dir {
        Dir::N => ((x, y - s), (x - s, y + s), (x + s, y + s)),
        Dir::E => ((x + s, y), (x - s, y - s), (x - s, y + s)),
        Dir::S => ((x, y + s), (x + s, y - s), (x - s, y - s)),
        Dir::W => ((x - s, y), (x + s, y + s), (x + s, y - s)),
    };
    format!(
        r##"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="#1f5fbf"/>"##,
        tip.0, tip.1, l.0, l.1, r.0, r.1
    )
}

fn grid_svg(out: &mut String, g: &Grid, ox: usize, oy: usize) {
    for r in 0..g.rows {
        for c in 0..g.cols {
            let (x, y) = (ox + c * CELL, oy + r * CELL);
            let fill = match g.get(r, c) {
                Cell::Wall => "#3c3c3c",
                Cell::Unknown => "#c8c8c8",
                Cell::Free(_) => "#ffffff",
            };
            let _ = write!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#999" stroke-width="0.5"/>"##
            );
            let (cx, cy) = (x as f64 + CELL as f64 / 2.0, y as f64 + CELL as f64 / 2.0);
            if g.get(r, c) == Cell::Unknown {
                let _ = write!(
                    out,
                    r##"<text x="{cx}" y="{:.1}" font-size="12" text-anchor="middle" fill="#666">?</text>"##,
                    cy + 4.0
                );
            }
            if g.goal == Some((r, c)) {
                let k = CELL as f64 * 0.3;
                let _ = write!(
                    out,
                    r##"<path d="M{:.1},{:.1}L{:.1},{:.1}M{:.1},{:.1}L{:.1},{:.1}" stroke="#c0392b" stroke-width="3"/>"##,
                    cx - k,
                    cy - k,
                    cx + k,
                    cy + k,
                    cx - k,
                    cy + k,
                    cx + k,
                    cy - k
                );
            }
            let m = g.get(r, c).markers();
            if m > 0 {
                let _ = write!(
                    out,
                    r##"<circle cx="{cx}" cy="{cy}" r="{:.1}" fill="#e2b33c"/><text x="{cx}" y="{:.1}" font-size="11" text-anchor="middle">{m}</text>"##,
                    CELL as f64 * 0.38,
                    cy + 4.0
                );
            }
        }
    }
    if let Some(p) = g.avatar {
        let (r, c) = p.cell();
        let (cx, cy) = (
            (ox + c * CELL) as f64 + CELL as f64 / 2.0,
            (oy + r * CELL) as f64 + CELL as f64 / 2.0,
        );
        out.push_str(&arrow(p.dir, cx, cy));
    }
}

/// SVG rendering: one flat cell grid per panel, laid out left to right.
pub fn svg(file: &GridFile) -> String {
    let ps = panels(file);
    let title_h = 20;
    let width = ps.iter().map(|(_, g)| g.cols * CELL).sum::<usize>() + GAP * (ps.len() + 1);
    let height = ps.iter().map(|(_, g)| g.rows * CELL).max().unwrap_or(0) + title_h + 2 * GAP;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace">"#
    );
    let mut ox = GAP;
    for (title, g) in &ps {
        let _ = write!(
            out,
            r#"<text x="{ox}" y="{}" font-size="14">{title}</text>"#,
            GAP + 10
        );
        grid_svg(&mut out, g, ox, GAP + title_h);
        ox += g.cols * CELL + GAP;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use vpsynth_core::fixtures::karel_example;

    #[test]
    fn karel_text_lists_both_grids() {
        let ex = karel_example();
        let t = text(&GridFile::Task(ex.outputs[3].task.clone()));
        assert!(t.starts_with("pregrid:\n"));
        assert!(t.contains("\npostgrid:\n"));
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let g = Grid::parse("#.x\n>..\n").unwrap();
        let s = svg(&GridFile::Grid(g));
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<rect").count(), 6);
        assert_eq!(s.matches("<polygon").count(), 1);
    }
}
