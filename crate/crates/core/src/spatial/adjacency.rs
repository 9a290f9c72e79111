use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric 0/1 neighbour structure over the sub-regions of one biopsy.
///
/// Neighbour lists are sorted and never contain the node itself. The
/// identity structure used by the non-spatial comparator is represented by
/// `self_loops = true` with no edges, i.e. `W = I` and `D_w = I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    neighbors: Vec<Vec<usize>>,
    self_loops: bool,
}

impl AdjacencyMatrix {
    /// Builds an adjacency from an undirected edge list. Duplicate edges
    /// collapse; self edges and out-of-range indices are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("adjacency needs at least one node".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Domain(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::Domain(format!("self edge at node {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            neighbors,
            self_loops: false,
        })
    }

    /// `W = I`: every node is its own (only) neighbour.
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("adjacency needs at least one node".into()));
        }
        Ok(Self {
            neighbors: vec![Vec::new(); n],
            self_loops: true,
        })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_identity(&self) -> bool {
        self.self_loops
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Row sum of `W`, the diagonal of `D_w`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() + usize::from(self.self_loops)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.degree(i)).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(a, b)` with `a < b`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.degree(i) == 0).collect()
    }

    pub fn has_isolated(&self) -> bool {
        (0..self.n()).any(|i| self.degree(i) == 0)
    }

    /// `vᵀ D_w v`.
    pub fn quad_degree(&self, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(i, x)| self.degree(i) as f64 * x * x)
            .sum()
    }

    /// `vᵀ W v`.
    pub fn quad_adjacency(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, list) in self.neighbors.iter().enumerate() {
            for &b in list {
                if b > a {
                    s += v[a] * v[b];
                }
            }
        }
        s *= 2.0;
        if self.self_loops {
            s += v.iter().map(|x| x * x).sum::<f64>();
        }
        s
    }

    /// `vᵀ (D_w − c W) v` without forming the matrix.
    pub fn car_quad_form(&self, v: &[f64], c: f64) -> f64 {
        self.quad_degree(v) - c * self.quad_adjacency(v)
    }

    /// Dense `W`.
    pub fn dense_w(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut w = DMatrix::zeros(n, n);
        for (a, b) in self.edges() {
            w[(a, b)] = 1.0;
            w[(b, a)] = 1.0;
        }
        if self.self_loops {
            for i in 0..n {
                w[(i, i)] = 1.0;
            }
        }
        w
    }

    /// Dense `D_w − c W`.
    pub fn dense_car_base(&self, c: f64) -> DMatrix<f64> {
        let w = self.dense_w();
        let mut q = -c * &w;
        for i in 0..self.n() {
            q[(i, i)] += self.degree(i) as f64;
        }
        q
    }

    /// Subgraph induced by `keep` (indices into this graph, ascending);
    /// node `keep[k]` becomes node `k`.
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.n()];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .filter(|&(a, b)| map[a] != usize::MAX && map[b] != usize::MAX)
            .map(|(a, b)| (map[a], map[b]))
            .collect();
        let mut out = Self::from_edges(keep.len(), &edges)?;
        out.self_loops = self.self_loops;
        Ok(out)
    }
}

/// Rook (edge-sharing) adjacency of a `rows × cols` grid with row-major
/// node numbering. A 1×1 grid yields a single isolated node, which callers
/// must treat as unusable for a CAR precision.
pub fn build_lattice_adjacency(rows: usize, cols: usize) -> Result<AdjacencyMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Domain(format!("lattice {rows}x{cols} is empty")));
    }
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    let adj = AdjacencyMatrix::from_edges(rows * cols, &edges)?;
    if adj.has_isolated() {
        log::warn!("lattice {rows}x{cols} has an isolated node; CAR precision will be singular");
    }
    Ok(adj)
}

/// Parses the `rows x cols` shorthand used in configs.
pub fn parse_lattice_shorthand(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Validation(format!("bad lattice shorthand '{s}'")));
    }
    let parse = |p: &str| {
        p.parse::<usize>()
            .map_err(|_| Error::Validation(format!("bad lattice shorthand '{s}'")))
    };
    let (r, c) = (parse(parts[0])?, parse(parts[1])?);
    if r == 0 || c == 0 {
        return Err(Error::Validation(format!("lattice '{s}' is empty")));
    }
    Ok((r, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_connected_lattice() {
        let a = build_lattice_adjacency(1, 2).unwrap();
        assert_eq!(a.n(), 2);
        assert_eq!(a.n_edges(), 1);
        assert_eq!(a.degrees(), vec![1, 1]);
    }

    #[test]
    fn five_by_five_counts() {
        let a = build_lattice_adjacency(5, 5).unwrap();
        assert_eq!(a.n(), 25);
        assert_eq!(a.n_edges(), 40);
        assert_eq!(a.degree(12), 4);
        assert_eq!(a.degree(0), 2);
        assert_eq!(a.degree(2), 3);
    }

    #[test]
    fn single_node_is_flagged() {
        let a = build_lattice_adjacency(1, 1).unwrap();
        assert_eq!(a.n(), 1);
        assert_eq!(a.n_edges(), 0);
        assert_eq!(a.degrees(), vec![0]);
        assert!(a.has_isolated());
    }

    #[test]
    fn edge_count_identity() {
        for rows in 1..7 {
            for cols in 1..7 {
                let a = build_lattice_adjacency(rows, cols).unwrap();
                assert_eq!(a.n_edges(), rows * (cols - 1) + cols * (rows - 1));
                let w = a.dense_w();
                assert_eq!(w.clone(), w.transpose());
                for i in 0..a.n() {
                    assert_eq!(w[(i, i)], 0.0);
                    assert_eq!(w.row(i).sum() as usize, a.degree(i));
                }
            }
        }
    }

    #[test]
    fn quad_forms_match_dense() {
        let a = build_lattice_adjacency(3, 4).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let dv = nalgebra::DVector::from_vec(v.clone());
        let q = a.dense_car_base(0.4);
        let dense = (dv.transpose() * q * &dv)[(0, 0)];
        assert!((a.car_quad_form(&v, 0.4) - dense).abs() < 1e-12);
    }

    #[test]
    fn identity_structure() {
        let a = AdjacencyMatrix::identity(3).unwrap();
        assert_eq!(a.degrees(), vec![1, 1, 1]);
        assert_eq!(a.dense_car_base(0.0), DMatrix::identity(3, 3));
        assert!(!a.has_isolated());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(AdjacencyMatrix::from_edges(2, &[(0, 2)]).is_err());
        assert!(AdjacencyMatrix::from_edges(2, &[(1, 1)]).is_err());
        assert!(AdjacencyMatrix::from_edges(0, &[]).is_err());
    }

    #[test]
    fn induced_subgraph_drops_nodes() {
        let a = build_lattice_adjacency(2, 2).unwrap();
        // 0-1, 0-2, 1-3, 2-3; drop node 1
        let s = a.induced(&[0, 2, 3]).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn shorthand() {
        assert_eq!(parse_lattice_shorthand("5 x 5").unwrap(), (5, 5));
        assert_eq!(parse_lattice_shorthand("3x4").unwrap(), (3, 4));
        assert!(parse_lattice_shorthand("3").is_err());
        assert!(parse_lattice_shorthand("0x2").is_err());
    }
}
