//! Doubly stochastic communication matrices.
//!
//! Static max-degree chains, the lazy transform, random protocols
//! (gossip, edge inclusion, edge failure) with their closed-form
//! expectations, running matrix products, total-variation distance,
//! and the return-time matrix used by the token-walk baseline.

use crate::graph::{sorted_symmetric_eigenvalues, Graph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Row/column-sum tolerance for the doubly stochastic check.
pub const STOCHASTIC_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MixingError {
    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("not a probability vector: {0}")]
    NotProbabilityVector(String),
    #[error("singular system while inverting return-time matrix")]
    SingularSystem,
}

/// A symmetric doubly stochastic matrix with its second singular value
/// (for symmetric P the singular values are the eigenvalue magnitudes).
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    /// Eigenvalues of the symmetric matrix, sorted descending.
    eigenvalues: Vec<f64>,
    sigma2: f64,
}

impl MixingMatrix {
    /// Wraps a symmetric matrix, verifying double stochasticity and
    /// nonnegativity to `STOCHASTIC_TOL` and computing the spectrum.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, MixingError> {
        check_doubly_stochastic(&entries)?;
        let eigenvalues = sorted_symmetric_eigenvalues(&entries);
        let sigma2 = second_singular_value(&eigenvalues);
        Ok(MixingMatrix {
            entries,
            eigenvalues,
            sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Spectral gap 1 - sigma2.
    pub fn gap(&self) -> f64 {
        1.0 - self.sigma2
    }

    /// Eigenvalues sorted descending; first entry is 1.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Second-largest eigenvalue lambda_2 (signed, unlike sigma2).
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Dense text format: first line "n", then row-major entries.
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| self.entries[(i, j)].to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn check_doubly_stochastic(m: &DMatrix<f64>) -> Result<(), MixingError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(MixingError::NotDoublyStochastic("not square".into()));
    }
    for i in 0..n {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..n {
            if m[(i, j)] < -STOCHASTIC_TOL {
                return Err(MixingError::NotDoublyStochastic(format!(
                    "negative entry {} at ({i},{j})",
                    m[(i, j)]
                )));
            }
            row += m[(i, j)];
            col += m[(j, i)];
        }
        if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MixingError::NotDoublyStochastic(format!(
                "row sum {row}, column sum {col} at index {i}"
            )));
        }
    }
    Ok(())
}

/// Second-largest singular value from a descending eigenvalue list of a
/// symmetric stochastic matrix: second-largest |eigenvalue|, clamped to
/// [0, 1] against roundoff.
fn second_singular_value(eigenvalues: &[f64]) -> f64 {
    let mut mags: Vec<f64> = eigenvalues.iter().map(|l| l.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    match mags.get(1) {
        Some(&m) => m.clamp(0.0, 1.0),
        None => 0.0, // 1x1 chain: only the trivial singular value
    }
}

/// Max-degree chain P = I - (D - A)/(delta_max + 1).
pub fn max_degree_chain(g: &Graph) -> MixingMatrix {
    let n = g.n();
    let scale = 1.0 / (g.max_degree() as f64 + 1.0);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0 - g.degree(i) as f64 * scale;
        for j in 0..n {
            if i != j && g.has_edge(i, j) {
                m[(i, j)] = scale;
            }
        }
    }
    MixingMatrix::new(m).expect("max-degree chain is doubly stochastic by construction")
}

/// Lazy transform (I + P)/2; shifts eigenvalues into [0, 1].
pub fn lazy(p: &MixingMatrix) -> MixingMatrix {
    let n = p.n();
    let mut m = p.entries().clone() * 0.5;
    for i in 0..n {
        m[(i, i)] += 0.5;
    }
    MixingMatrix::new(m).expect("lazy transform preserves double stochasticity")
}

/// Communication protocol for one synchronous round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Static,
    Gossip,
    EdgeInclusion,
    EdgeFailure,
}

/// Specification of a (possibly random) matrix protocol over a graph.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub graph: Graph,
    /// Static base chain (max-degree chain of the graph).
    pub base: MixingMatrix,
    /// Edge-failure probability; only meaningful for EdgeFailure.
    pub failure_prob: f64,
    /// Apply (I + P)/2 to every sampled matrix.
    pub lazy: bool,
}

impl ProtocolSpec {
    /// Builds a spec with per-kind lazy defaults: edge-inclusion and
    /// edge-failure matrices are lazified (their analysis assumes a
    /// nonnegative spectrum), while gossip matrices are used as sampled
    /// (they are projections, already positive semidefinite).
    pub fn new(kind: ProtocolKind, graph: Graph, failure_prob: f64) -> Result<Self, MixingError> {
        if kind == ProtocolKind::EdgeFailure && !(0.0..1.0).contains(&failure_prob) {
            return Err(MixingError::InvalidProtocol(format!(
                "failure probability must lie in [0,1), got {failure_prob}"
            )));
        }
        let base = max_degree_chain(&graph);
        let lazy = matches!(kind, ProtocolKind::EdgeInclusion | ProtocolKind::EdgeFailure);
        Ok(ProtocolSpec {
            kind,
            graph,
            base,
            failure_prob,
            lazy,
        })
    }

    pub fn with_lazy(mut self, lazy: bool) -> Self {
        self.lazy = lazy;
        self
    }
}

/// Samples one round's matrix from the protocol.
pub fn sample_protocol_matrix<R: Rng>(spec: &ProtocolSpec, rng: &mut R) -> MixingMatrix {
    let raw = match spec.kind {
        ProtocolKind::Static => spec.base.clone(),
        ProtocolKind::Gossip => sample_gossip(&spec.graph, rng),
        ProtocolKind::EdgeInclusion => sample_edge_inclusion(&spec.graph, rng),
        ProtocolKind::EdgeFailure => sample_edge_failure(&spec.graph, spec.failure_prob, rng),
    };
    if spec.lazy {
        lazy(&raw)
    } else {
        raw
    }
}

/// P(t) = I - (e_i - e_j)(e_i - e_j)^T / 2 for a uniformly random edge.
fn sample_gossip<R: Rng>(g: &Graph, rng: &mut R) -> MixingMatrix {
    let &(i, j) = &g.edges()[rng.random_range(0..g.num_edges())];
    let n = g.n();
    let mut m = DMatrix::identity(n, n);
    m[(i, i)] = 0.5;
    m[(j, j)] = 0.5;
    m[(i, j)] = 0.5;
    m[(j, i)] = 0.5;
    MixingMatrix::new(m).expect("gossip matrix is doubly stochastic")
}

/// Each node stays silent with probability 1 - deg/(delta_max + 1),
/// otherwise contacts a uniform neighbor; contacted edges are activated
/// bidirectionally (an edge picked from both ends counts once), then the
/// max-degree formula is applied to the random adjacency.
fn sample_edge_inclusion<R: Rng>(g: &Graph, rng: &mut R) -> MixingMatrix {
    let n = g.n();
    let dmax = g.max_degree() as f64;
    let mut active = DMatrix::<f64>::zeros(n, n);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| g.has_edge(i, j)).collect())
        .collect();
    for i in 0..n {
        let deg = g.degree(i) as f64;
        if rng.random::<f64>() < deg / (dmax + 1.0) {
            let j = neighbors[i][rng.random_range(0..neighbors[i].len())];
            active[(i, j)] = 1.0;
            active[(j, i)] = 1.0;
        }
    }
    matrix_from_random_adjacency(&active, dmax)
}

/// Each edge of g survives independently with probability 1 - rho; the
/// max-degree formula keeps the ORIGINAL delta_max.
fn sample_edge_failure<R: Rng>(g: &Graph, rho: f64, rng: &mut R) -> MixingMatrix {
    let n = g.n();
    let mut active = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in g.edges() {
        if rng.random::<f64>() >= rho {
            active[(i, j)] = 1.0;
            active[(j, i)] = 1.0;
        }
    }
    matrix_from_random_adjacency(&active, g.max_degree() as f64)
}

fn matrix_from_random_adjacency(active: &DMatrix<f64>, dmax: f64) -> MixingMatrix {
    let n = active.nrows();
    let scale = 1.0 / (dmax + 1.0);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let deg_t: f64 = (0..n).map(|j| active[(i, j)]).sum();
        m[(i, i)] = 1.0 - deg_t * scale;
        for j in 0..n {
            if i != j {
                m[(i, j)] = active[(i, j)] * scale;
            }
        }
    }
    MixingMatrix::new(m).expect("random-adjacency chain is doubly stochastic")
}

/// Closed-form expectation E[P(t)] of the protocol, including the lazy
/// transform when the spec applies it.
pub fn expected_protocol_matrix(spec: &ProtocolSpec) -> MixingMatrix {
    let g = &spec.graph;
    let n = g.n();
    let raw = match spec.kind {
        ProtocolKind::Static => spec.base.entries().clone(),
        ProtocolKind::Gossip => {
            // E P = I - (D - A)/<1, A 1>.
            let total: f64 = 2.0 * g.num_edges() as f64;
            let mut m = DMatrix::identity(n, n);
            for i in 0..n {
                m[(i, i)] -= g.degree(i) as f64 / total;
                for j in 0..n {
                    if i != j && g.has_edge(i, j) {
                        m[(i, j)] = 1.0 / total;
                    }
                }
            }
            m
        }
        ProtocolKind::EdgeInclusion => {
            // Each edge is active with probability (2 dmax + 1)/(dmax + 1)^2,
            // giving E P = (dmax/(dmax+1))^2 I + (2 dmax + 1)/(dmax + 1)^2 P_static.
            let dm = g.max_degree() as f64;
            let p_edge = (2.0 * dm + 1.0) / ((dm + 1.0) * (dm + 1.0));
            let id_coef = (dm / (dm + 1.0)) * (dm / (dm + 1.0));
            let mut m = spec.base.entries().clone() * p_edge;
            for i in 0..n {
                m[(i, i)] += id_coef;
            }
            m
        }
        ProtocolKind::EdgeFailure => {
            let rho = spec.failure_prob;
            let mut m = spec.base.entries().clone() * (1.0 - rho);
            for i in 0..n {
                m[(i, i)] += rho;
            }
            m
        }
    };
    let expected = MixingMatrix::new(raw).expect("protocol expectation is doubly stochastic");
    if spec.lazy {
        lazy(&expected)
    } else {
        expected
    }
}

/// lambda_2 of E[P(t)^T P(t)], the contraction rate for time-varying
/// protocols. Gossip (and static) admit exact values; edge protocols are
/// estimated by Monte-Carlo averaging of sampled P(t)^T P(t).
pub fn lambda2_expected_ptp<R: Rng>(spec: &ProtocolSpec, samples: usize, rng: &mut R) -> f64 {
    match spec.kind {
        ProtocolKind::Static => spec.base.lambda2(),
        ProtocolKind::Gossip if !spec.lazy => {
            // Raw gossip matrices are projections, so P^T P = P and the
            // expectation is exact.
            expected_protocol_matrix(spec).lambda2()
        }
        _ => {
            let n = spec.graph.n();
            let mut acc = DMatrix::<f64>::zeros(n, n);
            for _ in 0..samples {
                let p = sample_protocol_matrix(spec, rng);
                acc += p.entries().transpose() * p.entries();
            }
            acc /= samples as f64;
            sorted_symmetric_eigenvalues(&acc)[1]
        }
    }
}

/// Running product Phi(t, s) = P(s) P(s+1) ... P(t).
#[derive(Debug, Clone)]
pub struct MatrixChain {
    product: DMatrix<f64>,
    len: usize,
}

impl MatrixChain {
    pub fn identity(n: usize) -> Self {
        MatrixChain {
            product: DMatrix::identity(n, n),
            len: 0,
        }
    }

    /// Right-multiplies the product by one more round's matrix and
    /// re-verifies double stochasticity.
    pub fn extend(&mut self, p: &MixingMatrix) -> Result<(), MixingError> {
        if p.n() != self.product.nrows() {
            return Err(MixingError::DimensionMismatch {
                expected: self.product.nrows(),
                got: p.n(),
            });
        }
        self.product = &self.product * p.entries();
        self.len += 1;
        check_doubly_stochastic(&self.product)
    }

    pub fn product(&self) -> &DMatrix<f64> {
        &self.product
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.product.column(j).into_owned()
    }
}

/// Total-variation distance of a probability vector to uniform:
/// ||x - 1/n||_1 / 2.
pub fn tv_to_uniform(x: &DVector<f64>) -> Result<f64, MixingError> {
    let n = x.len();
    let mut sum = 0.0;
    for &v in x.iter() {
        if v < -1e-12 {
            return Err(MixingError::NotProbabilityVector(format!(
                "negative entry {v}"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-8 {
        return Err(MixingError::NotProbabilityVector(format!("sum = {sum}")));
    }
    let u = 1.0 / n as f64;
    Ok(0.5 * x.iter().map(|v| (v - u).abs()).sum::<f64>())
}

/// Return-time matrix Gamma = (I - P + 11^T/n)^{-1}.
pub fn return_time_matrix(p: &MixingMatrix) -> Result<DMatrix<f64>, MixingError> {
    let n = p.n();
    let mut m = DMatrix::identity(n, n) - p.entries();
    m.add_scalar_mut(1.0 / n as f64);
    m.try_inverse().ok_or(MixingError::SingularSystem)
}

/// n * max_i Gamma_ii, the rate constant of the token-walk baseline.
pub fn migd_rate_constant(p: &MixingMatrix) -> Result<f64, MixingError> {
    let gamma = return_time_matrix(p)?;
    let max_diag = (0..p.n())
        .map(|i| gamma[(i, i)])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(p.n() as f64 * max_diag)
}
