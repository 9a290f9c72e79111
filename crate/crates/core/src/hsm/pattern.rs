use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned observation window `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Window {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("degenerate window [{x0},{x1}]x[{y0},{y1}]")));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit() -> Self {
        Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Smallest window holding every point, padded to avoid zero extent.
    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut w = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in points {
            w[0] = w[0].min(p[0]);
            w[1] = w[1].max(p[0]);
            w[2] = w[2].min(p[1]);
            w[3] = w[3].max(p[1]);
        }
        if !w[0].is_finite() {
            return Err(Error::Empty("no points to bound".into()));
        }
        if w[1] == w[0] {
            w[1] += 1.0;
        }
        if w[3] == w[2] {
            w[3] += 1.0;
        }
        Self::new(w[0], w[1], w[2], w[3])
    }
}

/// Which of the two point types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    /// Type 1 (tumour).
    First,
    /// Type 2 (immune), modelled conditionally on type 1.
    Second,
}

impl Mark {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Mark::First),
            2 => Ok(Mark::Second),
            other => Err(Error::Validation(format!("unknown point type {other}, expected 1 or 2"))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Mark::First => 1,
            Mark::Second => 2,
        }
    }
}

/// Two-type planar point pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPattern {
    pub window: Window,
    pub points_1: Vec<Point>,
    pub points_2: Vec<Point>,
}

impl MarkedPattern {
    pub fn new(window: Window, points_1: Vec<Point>, points_2: Vec<Point>) -> Result<Self> {
        for p in points_1.iter().chain(&points_2) {
            if !window.contains(*p) {
                return Err(Error::Domain(format!("point ({}, {}) outside window", p[0], p[1])));
            }
        }
        Ok(Self { window, points_1, points_2 })
    }

    pub fn n1(&self) -> usize {
        self.points_1.len()
    }

    pub fn n2(&self) -> usize {
        self.points_2.len()
    }

    pub fn points(&self, mark: Mark) -> &[Point] {
        match mark {
            Mark::First => &self.points_1,
            Mark::Second => &self.points_2,
        }
    }
}

/// Uniform bins at least `r` wide for counting points within distance `r`.
#[derive(Debug, Clone)]
pub struct PointIndex {
    r2: f64,
    r: f64,
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<Point>>,
}

impl PointIndex {
    pub fn new(points: &[Point], window: &Window, r: f64) -> Self {
        let nx = ((window.width() / r).floor() as usize).clamp(1, 2048);
        let ny = ((window.height() / r).floor() as usize).clamp(1, 2048);
        let mut idx = Self {
            r2: r * r,
            r,
            x0: window.x0,
            y0: window.y0,
            sx: window.width() / nx as f64,
            sy: window.height() / ny as f64,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        };
        for &p in points {
            let (cx, cy) = (idx.bin_x(p[0]), idx.bin_y(p[1]));
            idx.cells[cy * nx + cx].push(p);
        }
        idx
    }

    fn bin_x(&self, x: f64) -> usize {
        (((x - self.x0) / self.sx).floor().max(0.0) as usize).min(self.nx - 1)
    }

    fn bin_y(&self, y: f64) -> usize {
        (((y - self.y0) / self.sy).floor().max(0.0) as usize).min(self.ny - 1)
    }

    /// Number of indexed points within distance `r` of `u`, boundary included.
    pub fn count_within(&self, u: Point) -> usize {
        let mut n = 0;
        for cy in self.bin_y(u[1] - self.r)..=self.bin_y(u[1] + self.r) {
            for cx in self.bin_x(u[0] - self.r)..=self.bin_x(u[0] + self.r) {
                n += self.cells[cy * self.nx + cx]
                    .iter()
                    .filter(|p| {
                        let (dx, dy) = (p[0] - u[0], p[1] - u[1]);
                        dx * dx + dy * dy <= self.r2
                    })
                    .count();
            }
        }
        n
    }
}
