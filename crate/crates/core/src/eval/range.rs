use std::fmt::Write as _;

use serde::Serialize;

use crate::games::{Analysis, Game};

/// The property pair plotted for a game and the bin widths along each axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RangeAxes {
    pub x: &'static str,
    pub y: &'static str,
    pub x_width: f64,
    pub y_width: f64,
}

impl RangeAxes {
    /// Solution length against pushed crates for Sokoban, path length against
    /// nearest-enemy distance for Zelda, solution length against jumps for Dave.
    pub fn for_game(game: Game) -> Self {
        let (x, y) = match game {
            Game::Sokoban => ("solution_length", "pushed_crates"),
            Game::Zelda => ("path_length", "nearest_enemy"),
            Game::DangerDave => ("solution_length", "jumps"),
        };
        Self {
            x,
            y,
            x_width: 1.0,
            y_width: 1.0,
        }
    }

    pub fn with_widths(mut self, x_width: f64, y_width: f64) -> Self {
        self.x_width = x_width;
        self.y_width = y_width;
        self
    }
}

/// 2-D histogram of playable levels. Bin `(i, j)` covers
/// `[i·x_width, (i+1)·x_width) × [j·y_width, (j+1)·y_width)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpressiveRange {
    pub axes: RangeAxes,
    /// `counts[j][i]`, rows along y.
    pub counts: Vec<Vec<usize>>,
}

impl ExpressiveRange {
    pub fn build(game: Game, analyses: &[Analysis], axes: RangeAxes) -> Self {
        let xi = game.control_index(axes.x).expect("x axis is a control");
        let yi = game.control_index(axes.y).expect("y axis is a control");
        let points: Vec<(usize, usize)> = analyses
            .iter()
            .filter(|a| a.playable)
            .filter_map(|a| Some((a.properties[xi]?, a.properties[yi]?)))
            .map(|(x, y)| {
                (
                    (x.max(0.0) / axes.x_width).floor() as usize,
                    (y.max(0.0) / axes.y_width).floor() as usize,
                )
            })
            .collect();
        let nx = points.iter().map(|p| p.0 + 1).max().unwrap_or(1);
        let ny = points.iter().map(|p| p.1 + 1).max().unwrap_or(1);
        let mut counts = vec![vec![0usize; nx]; ny];
        for (i, j) in points {
            counts[j][i] += 1;
        }
        Self { axes, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Number of non-empty bins.
    pub fn coverage(&self) -> usize {
        self.counts.iter().flatten().filter(|&&c| c > 0).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{0}_lo,{0}_hi,{1}_lo,{1}_hi,count\n", self.axes.x, self.axes.y);
        for (j, row) in self.counts.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                let (xw, yw) = (self.axes.x_width, self.axes.y_width);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    i as f64 * xw,
                    (i + 1) as f64 * xw,
                    j as f64 * yw,
                    (j + 1) as f64 * yw,
                    c
                );
            }
        }
        out
    }

    /// Heatmap with darker cells for larger counts, y growing upwards.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 12;
        const MARGIN: usize = 40;
        let ny = self.counts.len();
        let nx = self.counts.first().map_or(0, Vec::len);
        let (w, h) = (nx * CELL + 2 * MARGIN, ny * CELL + 2 * MARGIN);
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        for (j, row) in self.counts.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let shade = 255 - ((c as f64).ln_1p() / max.ln_1p() * 235.0) as u8;
                let x = MARGIN + i * CELL;
                let y = MARGIN + (ny - 1 - j) * CELL;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{c}</title></rect>"#
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            nx * CELL,
            ny * CELL
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            w / 2,
            h - 12,
            self.axes.x
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            h / 2,
            h / 2,
            self.axes.y
        );
        s.push_str("</svg>\n");
        s
    }
}
