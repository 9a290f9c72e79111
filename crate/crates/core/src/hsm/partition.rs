use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsm::{fit_hsm_mh, HsmPrior, MarkedPattern, MhConfig, Point, Window};
use crate::seeds;
use crate::spatial::{build_lattice_adjacency, AdjacencyMatrix};

/// Settings for splitting a biopsy into a regular grid and fitting each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub rows: usize,
    pub cols: usize,
    /// Interaction radius in the pattern's length units.
    pub r: f64,
    /// Cells with fewer points in total are dropped.
    pub min_points: usize,
    /// Drop retained cells that have no retained rook neighbour.
    pub drop_isolated: bool,
    pub prior: HsmPrior,
    pub mh: MhConfig,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            r: 30.0,
            min_points: 10,
            drop_isolated: true,
            prior: HsmPrior::default(),
            mh: MhConfig::default(),
        }
    }
}

/// Interaction estimate of one retained grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    /// Row-major index of the cell in the full grid.
    pub subregion_id: usize,
    pub row: usize,
    pub col: usize,
    pub n1: usize,
    pub n2: usize,
    pub theta_mean: f64,
    pub theta_sd: f64,
}

/// Retained cells in grid order and the rook adjacency among them.
#[derive(Debug, Clone)]
pub struct PartitionFit {
    pub cells: Vec<CellFit>,
    pub adjacency: AdjacencyMatrix,
    pub dropped: Vec<usize>,
}

impl PartitionFit {
    pub fn outcomes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.theta_mean).collect()
    }
}

/// Splits the pattern into cell sub-patterns, row-major.
pub fn split_grid(pattern: &MarkedPattern, rows: usize, cols: usize) -> Result<Vec<MarkedPattern>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Validation(format!("grid {rows}x{cols} is empty")));
    }
    let w = pattern.window;
    let (dx, dy) = (w.width() / cols as f64, w.height() / rows as f64);
    let mut cells: Vec<(Vec<Point>, Vec<Point>)> = vec![(Vec::new(), Vec::new()); rows * cols];
    let locate = |p: &Point| {
        let c = (((p[0] - w.x0) / dx).floor().max(0.0) as usize).min(cols - 1);
        let r = (((p[1] - w.y0) / dy).floor().max(0.0) as usize).min(rows - 1);
        r * cols + c
    };
    for p in &pattern.points_1 {
        cells[locate(p)].0.push(*p);
    }
    for p in &pattern.points_2 {
        cells[locate(p)].1.push(*p);
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let (r, c) = (k / cols, k % cols);
            let win = Window::new(
                w.x0 + c as f64 * dx,
                if c + 1 == cols { w.x1 } else { w.x0 + (c + 1) as f64 * dx },
                w.y0 + r as f64 * dy,
                if r + 1 == rows { w.y1 } else { w.y0 + (r + 1) as f64 * dy },
            )?;
            // floating-point edges: clamp stragglers onto the cell boundary
            let clamp = |p: Point| [p[0].clamp(win.x0, win.x1), p[1].clamp(win.y0, win.y1)];
            MarkedPattern::new(win, a.into_iter().map(clamp).collect(), b.into_iter().map(clamp).collect())
        })
        .collect()
}

/// Fits the interaction model on every usable grid cell. Cell `k` draws
/// from its own stream derived from `(seed, label, k)`, so results do not
/// depend on the thread count.
pub fn partition_and_fit(
    pattern: &MarkedPattern,
    config: &PartitionConfig,
    seed: u64,
    label: &str,
) -> Result<PartitionFit> {
    let cells = split_grid(pattern, config.rows, config.cols)?;
    let usable = |p: &MarkedPattern| p.n1() > 0 && p.n2() > 0 && p.n1() + p.n2() >= config.min_points;
    let fits: Vec<Option<Result<CellFit>>> = cells
        .par_iter()
        .enumerate()
        .map(|(k, cell)| {
            if !usable(cell) {
                return None;
            }
            let mut rng = seeds::stream(seed, &format!("{label}/cell-{k}"));
            Some(fit_hsm_mh(cell, config.r, &config.prior, &config.mh, &mut rng).map(|post| CellFit {
                subregion_id: k,
                row: k / config.cols,
                col: k % config.cols,
                n1: cell.n1(),
                n2: cell.n2(),
                theta_mean: post.theta_mean(),
                theta_sd: post.theta_sd(),
            }))
        })
        .collect();

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (k, f) in fits.into_iter().enumerate() {
        match f {
            Some(fit) => kept.push(fit?),
            None => dropped.push(k),
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty(format!("{label}: every sub-region was dropped")));
    }
    let grid = build_lattice_adjacency(config.rows, config.cols)?;
    let mut adjacency = grid.induced(&kept.iter().map(|c| c.subregion_id).collect::<Vec<_>>())?;
    if config.drop_isolated && adjacency.has_isolated() {
        let isolated = adjacency.isolated_nodes();
        for &i in &isolated {
            log::warn!("{label}: sub-region {} has no retained neighbour; dropped", kept[i].subregion_id);
            dropped.push(kept[i].subregion_id);
        }
        let mut k = 0;
        kept.retain(|_| {
            k += 1;
            !isolated.contains(&(k - 1))
        });
        dropped.sort_unstable();
        if kept.is_empty() {
            return Err(Error::Empty(format!("{label}: every sub-region was dropped")));
        }
        adjacency = grid.induced(&kept.iter().map(|c| c.subregion_id).collect::<Vec<_>>())?;
    }
    Ok(PartitionFit { cells: kept, adjacency, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_assigns_every_point_once() {
        let w = Window::new(0.0, 3.0, 0.0, 2.0).unwrap();
        let p = MarkedPattern::new(
            w,
            vec![[0.0, 0.0], [3.0, 2.0], [1.0, 1.0], [2.5, 0.5]],
            vec![[1.5, 1.99], [0.2, 1.5]],
        )
        .unwrap();
        let cells = split_grid(&p, 2, 3).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells.iter().map(|c| c.n1()).sum::<usize>(), 4);
        assert_eq!(cells.iter().map(|c| c.n2()).sum::<usize>(), 2);
        assert_eq!(cells[0].points_1, vec![[0.0, 0.0]]);
        assert_eq!(cells[5].points_1, vec![[3.0, 2.0]]);
        assert_eq!(cells[4].points_1, vec![[1.0, 1.0]]);
        assert!((cells.iter().map(|c| c.window.area()).sum::<f64>() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cells_are_dropped_from_adjacency() {
        // 1×3 strip: only the middle and right cells hold both types
        let w = Window::new(0.0, 3.0, 0.0, 1.0).unwrap();
        let mut p1 = vec![[0.5, 0.5]; 12];
        let mut p2 = Vec::new();
        for k in 0..12 {
            let x = 0.05 + 0.07 * k as f64;
            p1.push([1.0 + x, 0.3]);
            p2.push([1.0 + x, 0.7]);
            p1.push([2.0 + x, 0.4]);
            p2.push([2.0 + x, 0.6]);
        }
        let p = MarkedPattern::new(w, p1, p2).unwrap();
        let cfg = PartitionConfig {
            rows: 1,
            cols: 3,
            r: 0.2,
            mh: MhConfig { iterations: 300, burn_in: 100, ..Default::default() },
            ..Default::default()
        };
        let fit = partition_and_fit(&p, &cfg, 1, "b").unwrap();
        assert_eq!(fit.dropped, vec![0]);
        assert_eq!(fit.cells.iter().map(|c| c.subregion_id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(fit.adjacency.n(), 2);
        assert_eq!(fit.adjacency.n_edges(), 1);
        let again = partition_and_fit(&p, &cfg, 1, "b").unwrap();
        assert_eq!(fit.cells, again.cells);
    }

    #[test]
    fn all_dropped_is_an_error() {
        let p = MarkedPattern::new(Window::unit(), vec![[0.5, 0.5]], vec![]).unwrap();
        let cfg = PartitionConfig { rows: 2, cols: 2, r: 0.1, ..Default::default() };
        assert!(matches!(partition_and_fit(&p, &cfg, 0, "b"), Err(Error::Empty(_))));
    }
}
