use serde::{Deserialize, Serialize};

use super::PlanningError;
use crate::dataset::GrayImage;

/// `(col, row)`.
pub type Cell = (usize, usize);

/// Row-major occupancy certainties in `[0, 1]`. Cell `(c, r)` covers
/// `[c·res, (c+1)·res) × [r·res, (r+1)·res)` in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, PlanningError> {
        Self::from_cells(width, height, resolution, vec![0.0; width * height])
    }

    /// Values are clamped into `[0, 1]`; NaN becomes 1.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        mut cells: Vec<f64>,
    ) -> Result<Self, PlanningError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(PlanningError::InvalidGrid(format!(
                "resolution {resolution} must be positive"
            )));
        }
        if cells.len() != width * height {
            return Err(PlanningError::InvalidGrid(format!(
                "{} values for a {width}x{height} grid",
                cells.len()
            )));
        }
        for c in &mut cells {
            *c = if c.is_nan() { 1.0 } else { c.clamp(0.0, 1.0) };
        }
        Ok(Self {
            width,
            height,
            resolution,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn index(&self, (c, r): Cell) -> usize {
        r * self.width + c
    }

    pub fn in_bounds(&self, (c, r): Cell) -> bool {
        c < self.width && r < self.height
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.cells[self.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, value: f64) {
        let i = self.index(cell);
        self.cells[i] = value.clamp(0.0, 1.0);
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<Cell> {
        let (c, r) = ((x / self.resolution).floor(), (y / self.resolution).floor());
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn cell_center(&self, (c, r): Cell) -> (f64, f64) {
        ((c as f64 + 0.5) * self.resolution, (r as f64 + 0.5) * self.resolution)
    }

    /// Marks every cell whose centre lies within `radius` of an occupied cell's
    /// centre as occupied.
    pub fn inflate(&self, radius: f64, occupied_threshold: f64) -> OccupancyGrid {
        let k = (radius / self.resolution).floor() as isize;
        let r2 = (radius / self.resolution).powi(2);
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.cells[r * self.width + c] < occupied_threshold {
                    continue;
                }
                for dr in -k..=k {
                    for dc in -k..=k {
                        if ((dr * dr + dc * dc) as f64) > r2 {
                            continue;
                        }
                        let (nc, nr) = (c as isize + dc, r as isize + dr);
                        if nc >= 0 && nr >= 0 && (nc as usize) < self.width && (nr as usize) < self.height {
                            out.cells[nr as usize * self.width + nc as usize] = 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    /// Text form: a `cols rows resolution` header, then `rows` lines of values.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.width, self.height, self.resolution);
        for row in self.cells.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self, PlanningError> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let mut header = |name: &str| {
            tokens
                .next()
                .ok_or_else(|| PlanningError::InvalidGrid(format!("missing {name} in header")))
                .map(str::to_string)
        };
        let w: usize = header("cols")?
            .parse()
            .map_err(|e| PlanningError::InvalidGrid(format!("cols: {e}")))?;
        let h: usize = header("rows")?
            .parse()
            .map_err(|e| PlanningError::InvalidGrid(format!("rows: {e}")))?;
        let res: f64 = header("resolution")?
            .parse()
            .map_err(|e| PlanningError::InvalidGrid(format!("resolution: {e}")))?;
        let cells = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| PlanningError::InvalidGrid(format!("value {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cells(w, h, res, cells)
    }

    /// Pixel row `y` maps to grid row `y`; 0 is free and 255 occupied.
    pub fn from_image(img: &GrayImage, resolution: f64) -> Result<Self, PlanningError> {
        let cells = img.pixels().iter().map(|&p| p as f64 / 255.0).collect();
        Self::from_cells(img.width(), img.height(), resolution, cells)
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            (self.cells[y * self.width + x] * 255.0).round() as u8
        })
    }
}
