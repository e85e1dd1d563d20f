//! Problem instances: hinge-loss ensembles, scalar median problems, the
//! linear worst-case construction tied to a chain's second eigenvector,
//! noisy-gradient oracles, and reference-optimum computation.

use crate::mixing::MixingMatrix;
use crate::proximal::{project, ConstraintSet, ProximalSetup};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid instance parameters: {0}")]
    InvalidParams(String),
    #[error("reference optimum cross-check failed: dual-averaging value {da} vs grid value {grid} (tolerance {tol})")]
    OptimumMismatch { da: f64, grid: f64, tol: f64 },
}

/// A sum-structured objective f = (1/n) sum f_i with per-node value and
/// subgradient oracles, all L-Lipschitz in the setup's norm.
pub trait Objective {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    /// Common Lipschitz constant: every subgradient has dual norm <= L.
    fn lipschitz(&self) -> f64;
    fn setup(&self) -> &ProximalSetup;
    fn node_value(&self, i: usize, x: &DVector<f64>) -> f64;
    fn node_subgradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;

    /// Global objective (1/n) sum_i f_i(x).
    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n()).map(|i| self.node_value(i, x)).sum::<f64>() / self.n() as f64
    }

    /// A subgradient of the global objective: mean of node subgradients.
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.d());
        for i in 0..self.n() {
            g += self.node_subgradient(i, x);
        }
        g / self.n() as f64
    }
}

/// Hinge-loss ensemble: f_i(x) = max{0, 1 - y_i <b_i, x>} with features
/// b_i uniform on the unit sphere, labels from a random hyperplane with a
/// fraction of signs flipped. L = max ||b_i|| = 1.
pub struct SvmInstance {
    features: Vec<DVector<f64>>,
    labels: Vec<f64>,
    setup: ProximalSetup,
}

pub fn make_svm_instance(
    n: usize,
    d: usize,
    flip_prob: f64,
    seed: u64,
    setup: ProximalSetup,
) -> Result<SvmInstance, ObjectiveError> {
    if d < 2 {
        return Err(ObjectiveError::InvalidParams("svm needs d >= 2".into()));
    }
    if setup.dim() != d {
        return Err(ObjectiveError::InvalidParams(format!(
            "setup dimension {} != d = {d}",
            setup.dim()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        b /= b.norm();
        let mut y = if w.dot(&b) >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flip_prob {
            y = -y;
        }
        features.push(b);
        labels.push(y);
    }
    Ok(SvmInstance {
        features,
        labels,
        setup,
    })
}

/// Convenience: the standard hinge setup, Euclidean ball of radius 5.
pub fn svm_default_setup(d: usize) -> ProximalSetup {
    ProximalSetup::quadratic(ConstraintSet::EuclideanBall { dim: d, radius: 5.0 })
}

impl Objective for SvmInstance {
    fn n(&self) -> usize {
        self.features.len()
    }
    fn d(&self) -> usize {
        self.features[0].len()
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn setup(&self) -> &ProximalSetup {
        &self.setup
    }
    fn node_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        (1.0 - self.labels[i] * self.features[i].dot(x)).max(0.0)
    }
    fn node_subgradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let margin = self.labels[i] * self.features[i].dot(x);
        if margin < 1.0 {
            // Active hinge; at the kink (margin == 1) the max is treated
            // as inactive, so the subgradient is zero there.
            -&self.features[i] * self.labels[i]
        } else {
            DVector::zeros(self.d())
        }
    }
}

/// Scalar consensus-median problem: f_i(x) = |x - y_i|, L = 1.
pub struct MedianInstance {
    values: Vec<f64>,
    setup: ProximalSetup,
}

pub fn make_median_instance(values: Vec<f64>, setup: ProximalSetup) -> MedianInstance {
    assert!(!values.is_empty());
    assert_eq!(setup.dim(), 1);
    MedianInstance { values, setup }
}

/// Default 1-d box just wide enough to contain the node values.
pub fn median_default_setup(values: &[f64]) -> ProximalSetup {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    ProximalSetup::quadratic(ConstraintSet::Box {
        lo: vec![lo],
        hi: vec![hi],
    })
}

impl Objective for MedianInstance {
    fn n(&self) -> usize {
        self.values.len()
    }
    fn d(&self) -> usize {
        1
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn setup(&self) -> &ProximalSetup {
        &self.setup
    }
    fn node_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        (x[0] - self.values[i]).abs()
    }
    fn node_subgradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        // 0 at the kink for determinism.
        let diff = x[0] - self.values[i];
        DVector::from_element(1, if diff == 0.0 { 0.0 } else { diff.signum() })
    }
}

/// Worst-case linear instance on [-1, 1]: f_i(x) = (c + w_i) x with w the
/// chain's second eigenvector rescaled so its largest-magnitude entry is
/// exactly -1 (at node i_star). Since sum w_i = 0 the global objective is
/// c x, minimized at x* = -1 with value -c; node i_star's dual coordinate
/// follows the closed form c s - (1 - sigma2^s)/(1 - sigma2).
pub struct HardInstance {
    pub slopes: Vec<f64>,
    pub w: DVector<f64>,
    pub c: f64,
    pub i_star: usize,
    pub sigma2: f64,
    setup: ProximalSetup,
}

pub fn make_hard_instance(p: &MixingMatrix, c: f64) -> Result<HardInstance, ObjectiveError> {
    if !(c > 0.0 && c <= 1.0 / 3.0) {
        return Err(ObjectiveError::InvalidParams(format!(
            "slope offset must lie in (0, 1/3], got {c}"
        )));
    }
    let n = p.n();
    let eig = p.entries().clone().symmetric_eigen();
    // Order eigenpairs by eigenvalue descending; index 1 is lambda_2. A
    // lexicographic index tie-break makes degenerate eigenspaces
    // deterministic.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let lambda2 = eig.eigenvalues[order[1]];
    if lambda2 < -1e-9 {
        return Err(ObjectiveError::InvalidParams(
            "chain must have a nonnegative second eigenvalue (use the lazy transform)".into(),
        ));
    }
    let lambda2 = lambda2.max(0.0);
    let v = eig.eigenvectors.column(order[1]).into_owned();
    let i_star = (0..n)
        .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
        .unwrap();
    // Dividing by -v[i_star] pins w[i_star] = -1 and keeps |w_j| <= 1.
    let w = &v / (-v[i_star]);
    let residual = (p.entries() * &w - &w * lambda2).norm();
    if residual > 1e-8 {
        return Err(ObjectiveError::InvalidParams(format!(
            "eigenvector residual {residual} too large"
        )));
    }
    if w.sum().abs() > 1e-9 {
        return Err(ObjectiveError::InvalidParams(
            "second eigenvector not orthogonal to the all-ones vector".into(),
        ));
    }
    let slopes: Vec<f64> = w.iter().map(|&wi| c + wi).collect();
    Ok(HardInstance {
        slopes,
        w,
        c,
        i_star,
        sigma2: lambda2,
        setup: ProximalSetup::quadratic(ConstraintSet::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        }),
    })
}

impl HardInstance {
    /// Closed form for z at node i_star after s synchronous rounds when
    /// every node feeds its constant slope: c s - (1 - sigma2^s)/(1 - sigma2).
    pub fn z_istar_closed_form(&self, s: usize) -> f64 {
        let geom = if self.sigma2 >= 1.0 {
            s as f64
        } else {
            (1.0 - self.sigma2.powi(s as i32)) / (1.0 - self.sigma2)
        };
        self.c * s as f64 - geom
    }

    /// First round s at which the closed-form z at i_star turns positive.
    pub fn predicted_first_positive(&self, cap: usize) -> Option<usize> {
        (1..=cap).find(|&s| self.z_istar_closed_form(s) > 0.0)
    }
}

impl Objective for HardInstance {
    fn n(&self) -> usize {
        self.slopes.len()
    }
    fn d(&self) -> usize {
        1
    }
    fn lipschitz(&self) -> f64 {
        self.slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
    fn setup(&self) -> &ProximalSetup {
        &self.setup
    }
    fn node_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.slopes[i] * x[0]
    }
    fn node_subgradient(&self, i: usize, _x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.slopes[i])
    }
}

/// Zero-mean gradient-noise models with their second-moment bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// g + xi with xi uniform on [-scale, scale]^d.
    AdditiveUniform { scale: f64 },
    /// g * s with s in {0, 2}, each with probability 1/2 (mean 1).
    SignFlip,
}

/// Wraps exact subgradients in a noise model satisfying
/// E[g_hat | history] = g and E ||g_hat||_*^2 <= L_noisy^2.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOracle {
    pub kind: NoiseKind,
    pub l_noisy: f64,
}

pub fn wrap_noisy(base: &dyn Objective, kind: NoiseKind) -> NoisyOracle {
    let l = base.lipschitz();
    let l_noisy = match kind {
        NoiseKind::AdditiveUniform { scale } => {
            // E||g + xi||^2 = ||g||^2 + d scale^2 / 3.
            (l * l + base.d() as f64 * scale * scale / 3.0).sqrt()
        }
        // E||s g||^2 = (0 + 4)/2 ||g||^2.
        NoiseKind::SignFlip => l * 2.0f64.sqrt(),
    };
    NoisyOracle { kind, l_noisy }
}

impl NoisyOracle {
    pub fn sample<R: Rng>(&self, exact: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        match self.kind {
            NoiseKind::AdditiveUniform { scale } => {
                if scale == 0.0 {
                    return exact.clone();
                }
                exact.map(|g| g + rng.random_range(-scale..=scale))
            }
            NoiseKind::SignFlip => {
                let s = if rng.random::<bool>() { 2.0 } else { 0.0 };
                exact * s
            }
        }
    }
}

/// Schedule-free centralized dual averaging used only to pin down f*;
/// alpha(t) = r / (4 L sqrt(t)).
fn centralized_best_value(obj: &dyn Objective, iters: usize, r: f64) -> f64 {
    let setup = obj.setup();
    let l = obj.lipschitz().max(1e-12);
    let mut z = DVector::zeros(obj.d());
    let mut x = setup.constraint.anchor();
    let mut running = DVector::zeros(obj.d());
    let mut best = obj.value(&x);
    let eval_every = (iters / 200).max(1);
    for t in 1..=iters {
        z += obj.subgradient(&x);
        let alpha = r / (4.0 * l * (t as f64).sqrt());
        x = project(&z, alpha, setup).expect("finite iterates");
        running += &x;
        if t % eval_every == 0 || t == iters {
            let avg = &running / t as f64;
            best = best.min(obj.value(&avg)).min(obj.value(&x));
        }
    }
    best
}

/// A radius r with psi(x*) <= r^2 for any point of the constraint set.
pub fn proximal_radius(setup: &ProximalSetup) -> f64 {
    match (&setup.kind, &setup.constraint) {
        (_, ConstraintSet::EuclideanBall { radius, .. }) => radius / 2.0f64.sqrt(),
        (_, ConstraintSet::Box { lo, hi }) => {
            let sq: f64 = lo
                .iter()
                .zip(hi.iter())
                .map(|(&l, &h)| l.abs().max(h.abs()).powi(2))
                .sum();
            (0.5 * sq).sqrt().max(1e-6)
        }
        (crate::proximal::ProximalKind::Entropic, ConstraintSet::Simplex { dim }) => {
            (*dim as f64).ln().max(1e-6).sqrt()
        }
        (_, ConstraintSet::Simplex { .. }) => (0.5f64).sqrt(),
        (_, ConstraintSet::Unconstrained { .. }) => 1.0,
    }
}

/// Computes f* by a long centralized dual-averaging run, cross-checked
/// for 1-d problems by iterated grid search at resolution tolerance/10.
/// Returns the smaller of the two values; errors if the grid search
/// beats the bracket sanity check in the wrong direction (grid far ABOVE
/// the iterative value indicates a bad bracket).
pub fn reference_optimum(
    obj: &dyn Objective,
    tolerance: f64,
    iters: usize,
) -> Result<f64, ObjectiveError> {
    let r = proximal_radius(obj.setup());
    let f_da = centralized_best_value(obj, iters, r);
    if obj.d() != 1 {
        return Ok(f_da);
    }
    // 1-d bracket from the constraint set, falling back to a window
    // around the iterative solution.
    let (mut lo, mut hi) = match &obj.setup().constraint {
        ConstraintSet::Box { lo, hi } => (lo[0], hi[0]),
        ConstraintSet::EuclideanBall { radius, .. } => (-radius, *radius),
        _ => (-(f_da.abs() + 10.0), f_da.abs() + 10.0),
    };
    let (orig_lo, orig_hi) = (lo, hi);
    let mut f_grid = f64::INFINITY;
    let resolution = tolerance / 10.0;
    loop {
        let steps = 1000;
        let mut best_x = lo;
        let mut best = f64::INFINITY;
        for s in 0..=steps {
            let x = lo + (hi - lo) * s as f64 / steps as f64;
            let val = obj.value(&DVector::from_element(1, x));
            if val < best {
                best = val;
                best_x = x;
            }
        }
        f_grid = f_grid.min(best);
        let span = (hi - lo) / steps as f64;
        if span <= resolution {
            break;
        }
        // Refine around the incumbent, never leaving the feasible bracket.
        lo = (best_x - span).max(orig_lo);
        hi = (best_x + span).min(orig_hi);
    }
    if f_grid > f_da + 10.0 * tolerance {
        return Err(ObjectiveError::OptimumMismatch {
            da: f_da,
            grid: f_grid,
            tol: tolerance,
        });
    }
    Ok(f_da.min(f_grid))
}
