//! Discrete metric-measure domains: periodic grids (circle and flat tori) and
//! weighted graphs.
//!
//! Grid vertices are indexed with axis 0 fastest: `v = i0 + n*i1 + n^2*i2`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use crate::error::{Error, Result};

/// Periodic grid on `[0, L)^d` with `n` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub side: f64,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
}

impl Grid {
    fn new(dim: usize, n: usize, side: f64) -> Self {
        let nv = n.pow(dim as u32);
        let mut plus = vec![vec![0u32; nv]; dim];
        let mut minus = vec![vec![0u32; nv]; dim];
        for axis in 0..dim {
            let stride = n.pow(axis as u32);
            for v in 0..nv {
                let i = (v / stride) % n;
                let base = v - i * stride;
                plus[axis][v] = (base + ((i + 1) % n) * stride) as u32;
                minus[axis][v] = (base + ((i + n - 1) % n) * stride) as u32;
            }
        }
        Grid { dim, n, side, plus, minus }
    }

    /// Mesh width `L / n`.
    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Neighbor of `v` one step forward along `axis`.
    #[inline]
    pub fn plus(&self, axis: usize, v: usize) -> usize {
        self.plus[axis][v] as usize
    }

    /// Neighbor of `v` one step backward along `axis`.
    #[inline]
    pub fn minus(&self, axis: usize, v: usize) -> usize {
        self.minus[axis][v] as usize
    }

    /// Integer coordinates of `v`.
    pub fn coords(&self, v: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut r = v;
        for slot in c.iter_mut().take(self.dim) {
            *slot = r % self.n;
            r /= self.n;
        }
        c
    }

    /// Physical position of `v` in `[0, L)^d`.
    pub fn position(&self, v: usize) -> [f64; 3] {
        let c = self.coords(v);
        let h = self.h();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Torus distance: per-axis wrapped offsets combined in the Euclidean norm.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let ca = self.coords(a);
        let cb = self.coords(b);
        let h = self.h();
        let mut s = 0.0;
        for axis in 0..self.dim {
            let k = ca[axis].abs_diff(cb[axis]);
            let k = k.min(self.n - k) as f64 * h;
            s += k * k;
        }
        s.sqrt()
    }
}

/// Undirected edge `a -> b`; the orientation fixes the sign of edge fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub edges: Vec<Edge>,
    /// Per-vertex list of `(edge index, other endpoint)`.
    adjacency: Vec<Vec<(usize, usize)>>,
    distances: Vec<Vec<f64>>,
}

impl Graph {
    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances[a][b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    /// Periodic grid; `dim = 1` is the circle.
    Grid(Grid),
    Graph(Graph),
}

/// A finite metric-measure domain with synthetic curvature and dimension bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    /// Curvature lower bound `K`.
    pub k: f64,
    /// Dimension upper bound `N`, possibly `f64::INFINITY`.
    pub n_dim: f64,
    pub diam: f64,
    pub measure: Vec<f64>,
}

impl Domain {
    /// Flat torus `(R / LZ)^d` sampled with `n` points per axis.
    pub fn torus(dim: usize, n: usize, side: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDomain(format!("dimension {dim} not in 1..=3")));
        }
        if n < 4 {
            return Err(Error::InvalidDomain(format!("resolution {n} below 4")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidDomain(format!("side length {side} must be positive")));
        }
        let grid = Grid::new(dim, n, side);
        let cell = grid.h().powi(dim as i32);
        let nv = grid.num_vertices();
        Ok(Domain {
            kind: DomainKind::Grid(grid),
            k: 0.0,
            // the circle is treated as a 2-dimensional bound, see `regularity_interval`
            n_dim: dim.max(2) as f64,
            diam: 0.5 * side * (dim as f64).sqrt(),
            measure: vec![cell; nv],
        })
    }

    /// Circle of circumference `side` with `n` vertices.
    pub fn circle(n: usize, side: f64) -> Result<Self> {
        Self::torus(1, n, side)
    }

    /// Weighted graph with explicit vertex measures and edge `(a, b, weight, length)` records.
    pub fn graph(measure: Vec<f64>, edges: Vec<Edge>, k: f64, n_dim: f64) -> Result<Self> {
        let nv = measure.len();
        if nv == 0 {
            return Err(Error::InvalidDomain("graph has no vertices".into()));
        }
        if let Some((i, m)) = measure.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidDomain(format!("vertex {i} has non-positive measure {m}")));
        }
        if !(n_dim >= 2.0) {
            return Err(Error::InvalidDomain(format!("dimension bound {n_dim} below 2")));
        }
        let mut adjacency = vec![Vec::new(); nv];
        for (idx, e) in edges.iter().enumerate() {
            if e.a >= nv || e.b >= nv || e.a == e.b {
                return Err(Error::InvalidDomain(format!("edge {idx} ({}, {}) is invalid", e.a, e.b)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite() && e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::InvalidDomain(format!("edge {idx} needs positive weight and length")));
            }
            adjacency[e.a].push((idx, e.b));
            adjacency[e.b].push((idx, e.a));
        }
        let distances: Vec<Vec<f64>> = (0..nv).map(|s| dijkstra(&adjacency, &edges, s)).collect();
        let diam = distances.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        if !diam.is_finite() {
            return Err(Error::InvalidDomain("graph is disconnected".into()));
        }
        if diam == 0.0 {
            return Err(Error::InvalidDomain("graph needs at least two vertices".into()));
        }
        Ok(Domain { kind: DomainKind::Graph(Graph { edges, adjacency, distances }), k, n_dim, diam, measure })
    }

    /// Parse a graph spec file. Records, one per line, `#` starts a comment:
    ///
    /// ```text
    /// K <real>            curvature bound (default 0)
    /// N <real|inf>        dimension bound (default 2)
    /// vertex <id> <measure>
    /// edge <u> <v> <weight> [length]   length defaults to 1
    /// ```
    ///
    /// Vertex ids must be exactly `0..count` in any order.
    pub fn parse_graph(text: &str) -> Result<Self> {
        let mut k = 0.0;
        let mut n_dim = 2.0;
        let mut verts: Vec<(usize, f64)> = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let real = |s: &str| -> Result<f64> { parse_real(s).ok_or_else(|| parse_err(format!("expected a number, found `{s}`"))) };
            let index = |s: &str| -> Result<usize> { s.parse().map_err(|_| parse_err(format!("expected a vertex id, found `{s}`"))) };
            match (toks[0], toks.len()) {
                ("K", 2) => k = real(toks[1])?,
                ("N", 2) => n_dim = real(toks[1])?,
                ("vertex", 3) => verts.push((index(toks[1])?, real(toks[2])?)),
                ("edge", 4) | ("edge", 5) => edges.push(Edge {
                    a: index(toks[1])?,
                    b: index(toks[2])?,
                    weight: real(toks[3])?,
                    length: if toks.len() == 5 { real(toks[4])? } else { 1.0 },
                }),
                (tag, _) => return Err(parse_err(format!("malformed `{tag}` record"))),
            }
        }
        let mut measure = vec![f64::NAN; verts.len()];
        for (id, m) in verts {
            if id >= measure.len() || !measure[id].is_nan() {
                return Err(Error::InvalidDomain(format!("vertex id {id} duplicated or out of range")));
            }
            measure[id] = m;
        }
        Self::graph(measure, edges, k, n_dim)
    }

    pub fn load_graph(path: &Path) -> Result<Self> {
        Self::parse_graph(&std::fs::read_to_string(path)?)
    }

    /// Replace the synthetic curvature and dimension bounds.
    pub fn with_geometry(mut self, k: f64, n_dim: f64) -> Self {
        self.k = k;
        self.n_dim = n_dim;
        self
    }

    /// Multiply the measure by `c > 0`. On graphs the edge weights carry the
    /// measure of edge-supported integrals and are scaled too, so `Δ` is unchanged.
    pub fn with_measure_scaled(mut self, c: f64) -> Self {
        for m in &mut self.measure {
            *m *= c;
        }
        if let DomainKind::Graph(g) = &mut self.kind {
            for e in &mut g.edges {
                e.weight *= c;
            }
        }
        self
    }

    pub fn num_vertices(&self) -> usize {
        self.measure.len()
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// `K^- = max(-K, 0)`.
    pub fn k_minus(&self) -> f64 {
        (-self.k).max(0.0)
    }

    pub fn grid(&self) -> Option<&Grid> {
        match &self.kind {
            DomainKind::Grid(g) => Some(g),
            DomainKind::Graph(_) => None,
        }
    }

    pub fn as_graph(&self) -> Option<&Graph> {
        match &self.kind {
            DomainKind::Graph(g) => Some(g),
            DomainKind::Grid(_) => None,
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match &self.kind {
            DomainKind::Grid(g) => g.distance(a, b),
            DomainKind::Graph(g) => g.distance(a, b),
        }
    }

    /// Closed metric ball. A relative slack of a few ulps keeps vertices at
    /// exactly distance `r` inside despite rounding in `r` itself.
    pub fn ball(&self, center: usize, r: f64) -> Ball {
        let cutoff = r * (1.0 + 8.0 * f64::EPSILON);
        let members = (0..self.num_vertices()).filter(|&v| self.distance(center, v) <= cutoff).collect();
        Ball { center, radius: r, members }
    }

    /// Pairs `(a, b, length)` of neighboring vertices, each pair once.
    pub fn edge_pairs(&self) -> Vec<(usize, usize, f64)> {
        match &self.kind {
            DomainKind::Grid(g) => {
                let h = g.h();
                let mut out = Vec::with_capacity(g.dim * g.num_vertices());
                for axis in 0..g.dim {
                    for v in 0..g.num_vertices() {
                        out.push((v, g.plus(axis, v), h));
                    }
                }
                out
            }
            DomainKind::Graph(g) => g.edges.iter().map(|e| (e.a, e.b, e.length)).collect(),
        }
    }
}

/// Parse a real, accepting `inf` / `infinity`.
pub fn parse_real(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok().filter(|x: &f64| x.is_finite()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
}

impl Ball {
    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn measure(&self, domain: &Domain) -> f64 {
        self.members.iter().map(|&v| domain.measure[v]).sum()
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

fn dijkstra(adjacency: &[Vec<(usize, usize)>], edges: &[Edge], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, source));
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(e, w) in &adjacency[v] {
            let nd = d + edges[e].length;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_measure_is_uniform() {
        let d = Domain::torus(1, 8, 2.0 * PI).unwrap();
        assert_eq!(d.num_vertices(), 8);
        for &m in &d.measure {
            assert!((m - 2.0 * PI / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn torus_total_measure_and_diameter() {
        let d = Domain::torus(2, 16, 1.0).unwrap();
        assert_eq!(d.num_vertices(), 256);
        assert!((d.total_measure() - 1.0).abs() < 1e-13);
        let brute = (0..256).flat_map(|a| (0..256).map(move |b| (a, b))).map(|(a, b)| d.distance(a, b)).fold(0.0f64, f64::max);
        assert!((brute - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((d.diam - brute).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Domain::torus(4, 8, 1.0).is_err());
        assert!(Domain::torus(2, 3, 1.0).is_err());
        assert!(Domain::torus(2, 8, 0.0).is_err());
    }

    #[test]
    fn every_grid_vertex_has_2d_neighbors() {
        let d = Domain::torus(3, 5, 1.0).unwrap();
        let g = d.grid().unwrap();
        for v in 0..g.num_vertices() {
            for axis in 0..3 {
                assert_eq!(g.minus(axis, g.plus(axis, v)), v);
                assert_ne!(g.plus(axis, v), v);
            }
        }
    }

    #[test]
    fn circle_balls() {
        let d = Domain::torus(1, 8, 2.0 * PI).unwrap();
        assert_eq!(d.ball(0, 0.0).members, vec![0]);
        assert_eq!(d.ball(0, PI).members.len(), 8);
        assert_eq!(d.ball(3, d.diam).members.len(), 8);
    }

    #[test]
    fn torus_ball_matches_brute_force() {
        let d = Domain::torus(2, 16, 1.0).unwrap();
        let b = d.ball(0, 0.25);
        let g = d.grid().unwrap();
        let brute: Vec<usize> = (0..256)
            .filter(|&v| {
                let p = g.position(v);
                let dx = p[0].min(1.0 - p[0]);
                let dy = p[1].min(1.0 - p[1]);
                (dx * dx + dy * dy).sqrt() <= 0.25 + 1e-12
            })
            .collect();
        assert_eq!(b.members, brute);
    }

    #[test]
    fn graph_parsing_and_metric() {
        let text = "# path with a chord\nK -1\nN 3\nvertex 0 1\nvertex 1 2\nvertex 2 1\nvertex 3 0.5\n\
                    edge 0 1 1 1\nedge 1 2 2 1\nedge 2 3 1\nedge 0 3 1 5\n";
        let d = Domain::parse_graph(text).unwrap();
        assert_eq!(d.k, -1.0);
        assert_eq!(d.n_dim, 3.0);
        assert_eq!(d.distance(0, 3), 3.0);
        assert_eq!(d.diam, 3.0);
        assert_eq!(d.k_minus(), 1.0);
    }

    #[test]
    fn graph_parse_errors_carry_line() {
        match Domain::parse_graph("vertex 0 1\nedge 0 x 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Domain::parse_graph("vertex 0 1\nvertex 1 1\n").is_err());
        assert!(Domain::parse_graph("vertex 0 0\nvertex 1 1\nedge 0 1 1\n").is_err());
    }
}
