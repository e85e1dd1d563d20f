//! Graph topologies and their spectral quantities.
//!
//! Builders for the four network families used throughout (k-connected
//! cycles and paths, two-dimensional grids, random geometric graphs, and
//! random regular expanders), the normalized Laplacian
//! `I - D^{-1/2} A D^{-1/2}`, and an exhaustive Cheeger-constant
//! computation for small graphs.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Eigenvalues below this magnitude are treated as exactly zero.
pub const EIG_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph parameters: {0}")]
    InvalidParams(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("failed to sample a connected graph after {0} attempts")]
    SamplingExhausted(usize),
    #[error("cheeger_constant_exact requires n <= 20, got n = {0}")]
    TooLargeForEnumeration(usize),
    #[error("malformed edge list: {0}")]
    ParseError(String),
}

/// An undirected, connected, simple graph with degree bookkeeping.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: DMatrix<f64>,
    degrees: Vec<usize>,
    max_degree: usize,
    min_degree: usize,
}

impl Graph {
    /// Builds a graph from an unordered edge set, rejecting disconnected
    /// input, self loops, and out-of-range endpoints. Duplicate edges
    /// collapse to one.
    pub fn from_edges(n: usize, raw_edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::InvalidParams("n must be positive".into()));
        }
        let mut adjacency = DMatrix::zeros(n, n);
        for &(i, j) in raw_edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidParams(format!(
                    "edge ({i},{j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(GraphError::InvalidParams(format!("self loop at node {i}")));
            }
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        let degrees: Vec<usize> = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[(i, j)] > 0.0).count())
            .collect();
        let graph = Graph {
            n,
            edges,
            adjacency,
            max_degree: degrees.iter().copied().max().unwrap_or(0),
            min_degree: degrees.iter().copied().min().unwrap_or(0),
            degrees,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn min_degree(&self) -> usize {
        self.min_degree
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] > 0.0
    }

    fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..self.n {
                if self.adjacency[(i, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    /// Edge-list text format: first line `n m`, then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GraphError::ParseError("empty input".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GraphError::ParseError("bad node count".into()))?;
        let m: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GraphError::ParseError("bad edge count".into()))?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GraphError::ParseError(format!("bad edge line: {line}")))?;
            let j: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GraphError::ParseError(format!("bad edge line: {line}")))?;
            edges.push((i, j));
        }
        if edges.len() != m {
            return Err(GraphError::ParseError(format!(
                "expected {m} edges, found {}",
                edges.len()
            )));
        }
        Graph::from_edges(n, &edges)
    }
}

/// The normalized graph Laplacian `I - D^{-1/2} A D^{-1/2}` together with
/// its eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    pub matrix: DMatrix<f64>,
    /// `lambda_1 >= lambda_2 >= ... >= lambda_n`, with `lambda_n = 0`.
    pub eigenvalues: Vec<f64>,
}

impl NormalizedLaplacian {
    /// Second-smallest eigenvalue `lambda_{n-1}`, the quantity that
    /// controls the spectral gap of the max-degree chain.
    pub fn lambda_second_smallest(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 2]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }
}

pub fn normalized_laplacian(g: &Graph) -> NormalizedLaplacian {
    let n = g.n();
    let inv_sqrt_deg: Vec<f64> = g.degrees().iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        matrix[(i, i)] = 1.0;
        for j in 0..n {
            if i != j && g.has_edge(i, j) {
                matrix[(i, j)] = -inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }
    }
    let eigenvalues = sorted_symmetric_eigenvalues(&matrix);
    debug_assert!(eigenvalues[n - 1].abs() <= 1e-7, "smallest eigenvalue should be 0");
    NormalizedLaplacian { matrix, eigenvalues }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sorted_symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// k-connected cycle: node i adjacent to i +- 1, ..., i +- k (mod n).
pub fn build_cycle(n: usize, k: usize) -> Result<Graph, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidParams("cycle needs n >= 3".into()));
    }
    if k == 0 || 2 * k >= n {
        return Err(GraphError::InvalidParams(format!(
            "cycle requires 0 < 2k < n (got n = {n}, k = {k})"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for step in 1..=k {
            edges.push((i, (i + step) % n));
        }
    }
    Graph::from_edges(n, &edges)
}

/// k-connected path: node i adjacent to all j with 0 < |i - j| <= k.
pub fn build_path(n: usize, k: usize) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParams("path needs n >= 2".into()));
    }
    if k == 0 || k >= n {
        return Err(GraphError::InvalidParams(format!(
            "path requires 0 < k < n (got n = {n}, k = {k})"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for step in 1..=k {
            if i + step < n {
                edges.push((i, i + step));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// side x side grid with k-connectivity in axis-aligned directions.
/// With `toroidal` the grid wraps, making it the Cartesian product of
/// two k-connected cycles on `side` nodes.
pub fn build_grid(side: usize, k: usize, toroidal: bool) -> Result<Graph, GraphError> {
    if side < 2 {
        return Err(GraphError::InvalidParams("grid needs side >= 2".into()));
    }
    if k == 0 {
        return Err(GraphError::InvalidParams("grid needs k >= 1".into()));
    }
    if toroidal && 2 * k >= side {
        return Err(GraphError::InvalidParams(format!(
            "toroidal grid requires 2k < side (got side = {side}, k = {k})"
        )));
    }
    let n = side * side;
    let id = |a: usize, b: usize| a * side + b;
    let mut edges = Vec::new();
    for a in 0..side {
        for b in 0..side {
            for step in 1..=k {
                if toroidal {
                    edges.push((id(a, b), id((a + step) % side, b)));
                    edges.push((id(a, b), id(a, (b + step) % side)));
                } else {
                    if a + step < side {
                        edges.push((id(a, b), id(a + step, b)));
                    }
                    if b + step < side {
                        edges.push((id(a, b), id(a, b + step)));
                    }
                }
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Default connectivity radius for random geometric graphs:
/// sqrt(log^{1+eps}(n) / n).
pub fn rgg_default_radius(n: usize, eps: f64) -> f64 {
    let ln = (n as f64).ln();
    (ln.powf(1.0 + eps) / n as f64).sqrt()
}

/// Random geometric graph: n points uniform on the unit square, edge iff
/// Euclidean distance < radius. Resamples (fresh sub-seed) until
/// connected, up to 100 attempts.
pub fn build_random_geometric(n: usize, radius: f64, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParams("rgg needs n >= 2".into()));
    }
    if !(radius > 0.0) {
        return Err(GraphError::InvalidParams("rgg needs radius > 0".into()));
    }
    const MAX_ATTEMPTS: usize = 100;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                if (dx * dx + dy * dy).sqrt() < radius {
                    edges.push((i, j));
                }
            }
        }
        match Graph::from_edges(n, &edges) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::SamplingExhausted(MAX_ATTEMPTS))
}

/// Random d-regular graph via the pairing model: the n*d half-edges are
/// matched uniformly at random; samples with self loops, multi-edges, or
/// disconnected components are rejected.
pub fn build_random_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GraphError> {
    if d < 3 || d >= n {
        return Err(GraphError::InvalidParams(format!(
            "random regular requires 3 <= d < n (got n = {n}, d = {d})"
        )));
    }
    if (n * d) % 2 != 0 {
        return Err(GraphError::InvalidParams("n * d must be even".into()));
    }
    // The chance one pairing is simple decays like exp(-(d^2 - 1)/4)
    // (about 0.25% at d = 5), so the rejection budget must be generous;
    // individual attempts are cheap.
    const MAX_ATTEMPTS: usize = 50_000;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    'attempt: for _ in 0..MAX_ATTEMPTS {
        // Half-edge i*d + r belongs to node i.
        let mut stubs: Vec<usize> = (0..n * d).map(|s| s / d).collect();
        // Fisher-Yates; pairing consecutive entries of a uniform shuffle
        // gives a uniform perfect matching.
        for i in (1..stubs.len()).rev() {
            let j = rng.random_range(0..=i);
            stubs.swap(i, j);
        }
        let mut edges = Vec::with_capacity(n * d / 2);
        let mut seen = vec![false; n * n];
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || seen[u * n + v] {
                continue 'attempt;
            }
            seen[u * n + v] = true;
            seen[v * n + u] = true;
            edges.push((u, v));
        }
        match Graph::from_edges(n, &edges) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::SamplingExhausted(MAX_ATTEMPTS))
}

/// Exact Cheeger constant by enumerating all nonempty proper subsets:
/// min over S of |E(S, S^c)| / min(vol(S), vol(S^c)).
pub fn cheeger_constant_exact(g: &Graph) -> Result<f64, GraphError> {
    let n = g.n();
    if n > 20 {
        return Err(GraphError::TooLargeForEnumeration(n));
    }
    let total_vol: usize = g.degrees().iter().sum();
    let mut best = f64::INFINITY;
    // Fix node 0 out of S; S and S^c give the same ratio.
    for mask in 1u32..(1 << (n - 1)) {
        let in_s = |i: usize| i > 0 && (mask >> (i - 1)) & 1 == 1;
        let mut cut = 0usize;
        let mut vol_s = 0usize;
        for i in 0..n {
            if in_s(i) {
                vol_s += g.degree(i);
            }
        }
        for &(i, j) in g.edges() {
            if in_s(i) != in_s(j) {
                cut += 1;
            }
        }
        let denom = vol_s.min(total_vol - vol_s);
        let ratio = cut as f64 / denom as f64;
        if ratio < best {
            best = ratio;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cycle_4_1_edges_and_degrees() {
        let g = build_cycle(4, 1).unwrap();
        let mut edges = g.edges().to_vec();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert!(g.degrees().iter().all(|&d| d == 2));
    }

    #[test]
    fn cycle_5_2_is_complete() {
        let g = build_cycle(5, 2).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 4));
        assert_eq!(g.num_edges(), 10);
    }

    #[test]
    fn cycle_rejects_2k_ge_n() {
        assert!(build_cycle(4, 2).is_err());
        assert!(build_cycle(6, 3).is_err());
    }

    #[test]
    fn cycle_8_second_smallest_eigenvalue() {
        let g = build_cycle(8, 1).unwrap();
        let lap = normalized_laplacian(&g);
        let expected = 1.0 - (2.0 * std::f64::consts::PI / 8.0).cos();
        assert_abs_diff_eq!(lap.lambda_second_smallest(), expected, epsilon = 1e-9);
    }

    #[test]
    fn path_degrees() {
        let g = build_path(3, 1).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
        let g2 = build_path(2, 1).unwrap();
        assert_eq!(g2.num_edges(), 1);
        assert!(build_path(3, 3).is_err());
    }

    #[test]
    fn path_16_2_cheeger_sandwich() {
        let g = build_path(16, 2).unwrap();
        let h = cheeger_constant_exact(&g).unwrap();
        let lam = normalized_laplacian(&g).lambda_second_smallest();
        assert!(2.0 * h >= lam);
        assert!(lam > h * h / 2.0);
    }

    #[test]
    fn grid_2x2_is_c4() {
        let g = build_grid(2, 1, false).unwrap();
        let c4 = build_cycle(4, 1).unwrap();
        // Same degree multiset and edge count; 2x2 grid is a 4-cycle.
        assert_eq!(g.num_edges(), c4.num_edges());
        assert!(g.degrees().iter().all(|&d| d == 2));
    }

    #[test]
    fn grid_3x3_degrees() {
        let g = build_grid(3, 1, false).unwrap();
        assert_eq!(g.degree(0), 2); // corner
        assert_eq!(g.degree(4), 4); // center
        let t = build_grid(3, 1, true).unwrap();
        assert!(t.degrees().iter().all(|&d| d == 4));
        assert!(build_grid(4, 2, true).is_err());
    }

    #[test]
    fn rgg_small_cases() {
        let g = build_random_geometric(2, 2.0, 42).unwrap();
        assert_eq!(g.num_edges(), 1);
        let g50 = build_random_geometric(50, rgg_default_radius(50, 1.0), 1).unwrap();
        assert!(g50.min_degree() >= 1);
        let g200 = build_random_geometric(200, rgg_default_radius(200, 1.0), 7).unwrap();
        assert!(normalized_laplacian(&g200).lambda_second_smallest() > 0.0);
    }

    #[test]
    fn random_regular_basics() {
        let g = build_random_regular(4, 3, 0).unwrap();
        assert_eq!(g.num_edges(), 6); // K4
        let g10 = build_random_regular(10, 3, 3).unwrap();
        assert!(g10.degrees().iter().all(|&d| d == 3));
        assert!(build_random_regular(5, 3, 0).is_err()); // odd n*d
    }

    #[test]
    fn laplacian_catalog() {
        let c4 = normalized_laplacian(&build_cycle(4, 1).unwrap());
        let expect = [2.0, 1.0, 1.0, 0.0];
        for (a, b) in c4.eigenvalues.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let k3 = normalized_laplacian(&build_cycle(3, 1).unwrap());
        assert_abs_diff_eq!(k3.eigenvalues[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(k3.eigenvalues[1], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(k3.eigenvalues[2], 0.0, epsilon = 1e-9);
        let p2 = normalized_laplacian(&build_path(2, 1).unwrap());
        assert_abs_diff_eq!(p2.eigenvalues[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p2.eigenvalues[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cheeger_small_cases() {
        let k3 = build_cycle(3, 1).unwrap();
        assert_abs_diff_eq!(cheeger_constant_exact(&k3).unwrap(), 1.0, epsilon = 1e-12);
        let p2 = build_path(2, 1).unwrap();
        assert_abs_diff_eq!(cheeger_constant_exact(&p2).unwrap(), 1.0, epsilon = 1e-12);
        let p8 = build_path(8, 1).unwrap();
        let h = cheeger_constant_exact(&p8).unwrap();
        let lam = normalized_laplacian(&p8).lambda_second_smallest();
        assert!(2.0 * h >= lam && lam > h * h / 2.0);
        let big = build_cycle(21, 1).unwrap();
        assert!(cheeger_constant_exact(&big).is_err());
    }

    #[test]
    fn circulant_eigenvalue_check() {
        // Every cycle Laplacian eigenvalue matches the circulant formula
        // 1 - (1/k) sum_j cos(2 pi j m / n) for some m.
        for (n, k) in [(8usize, 1usize), (10, 2), (12, 1)] {
            let lap = normalized_laplacian(&build_cycle(n, k).unwrap());
            let formula: Vec<f64> = (0..n)
                .map(|m| {
                    1.0 - (1..=k)
                        .map(|j| (2.0 * std::f64::consts::PI * (j * m) as f64 / n as f64).cos())
                        .sum::<f64>()
                        / k as f64
                })
                .collect();
            for &lam in &lap.eigenvalues {
                assert!(
                    formula.iter().any(|&f| (f - lam).abs() < 1e-8),
                    "eigenvalue {lam} not matched for cycle({n},{k})"
                );
            }
        }
    }

    #[test]
    fn cycle_eigenvalue_scaling() {
        // lambda_{n-1} * n^2 stays in a fixed bracket over doubling n.
        let vals: Vec<f64> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| {
                let lam = normalized_laplacian(&build_cycle(n, 1).unwrap())
                    .lambda_second_smallest();
                lam * (n * n) as f64
            })
            .collect();
        for v in &vals {
            assert!(*v > 15.0 && *v < 25.0, "lambda * n^2 = {v} out of bracket");
        }
    }

    #[test]
    fn toroidal_grid_cartesian_product_identity() {
        for (side, k) in [(4usize, 1usize), (5, 1), (6, 2)] {
            let grid = build_grid(side, k, true).unwrap();
            let cycle = build_cycle(side, k).unwrap();
            let lg = normalized_laplacian(&grid).lambda_second_smallest();
            let lc = normalized_laplacian(&cycle).lambda_second_smallest();
            assert_abs_diff_eq!(lg, lc / 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn expander_gap_bounded_across_seeds() {
        let mut min_gap = f64::INFINITY;
        for seed in 0..20u64 {
            let g = build_random_regular(100, 5, 11 + seed).unwrap();
            let lam = normalized_laplacian(&g).lambda_second_smallest();
            min_gap = min_gap.min(lam);
        }
        assert!(min_gap > 0.1, "expander spectral gap too small: {min_gap}");
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = build_grid(3, 1, false).unwrap();
        let text = g.to_edge_list();
        let g2 = Graph::from_edge_list(&text).unwrap();
        assert_eq!(g.n(), g2.n());
        assert_eq!(g.edges(), g2.edges());
    }
}
