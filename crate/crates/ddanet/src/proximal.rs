//! Proximal setups and the projection operator.
//!
//! Two geometries: quadratic psi = ||x||_2^2 / 2 (Euclidean norm pair)
//! and entropic psi = sum x_i log x_i + log d on the simplex (l1 norm,
//! l-infinity dual). The projection Pi(z, alpha) minimizes
//! <z, x> + psi(x)/alpha over the constraint set, applied to the
//! accumulated dual vector directly, and the composite variant adds a
//! round-weighted l1 penalty.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProximalError {
    #[error("non-finite input to projection")]
    NonFinite,
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error("composite projection not implemented for this setup/regularizer combination")]
    UnsupportedComposite,
}

/// Constraint set containing the designated anchor point.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Unconstrained { dim: usize },
    EuclideanBall { dim: usize, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Simplex { dim: usize },
}

impl ConstraintSet {
    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Unconstrained { dim } => *dim,
            ConstraintSet::EuclideanBall { dim, .. } => *dim,
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::Simplex { dim } => *dim,
        }
    }

    /// The point at which psi vanishes: origin for ball/box/unconstrained,
    /// uniform vector for the simplex.
    pub fn anchor(&self) -> DVector<f64> {
        match self {
            ConstraintSet::Simplex { dim } => DVector::from_element(*dim, 1.0 / *dim as f64),
            _ => DVector::zeros(self.dim()),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            ConstraintSet::Unconstrained { .. } => true,
            ConstraintSet::EuclideanBall { radius, .. } => x.norm() <= radius + tol,
            ConstraintSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol),
            ConstraintSet::Simplex { .. } => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol
            }
        }
    }
}

/// The proximal function choice; fixes the norm pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProximalKind {
    Quadratic,
    Entropic,
}

#[derive(Debug, Clone)]
pub struct ProximalSetup {
    pub kind: ProximalKind,
    pub constraint: ConstraintSet,
}

impl ProximalSetup {
    pub fn quadratic(constraint: ConstraintSet) -> Self {
        ProximalSetup {
            kind: ProximalKind::Quadratic,
            constraint,
        }
    }

    /// Entropic setup; only meaningful on the simplex.
    pub fn entropic(dim: usize) -> Self {
        ProximalSetup {
            kind: ProximalKind::Entropic,
            constraint: ConstraintSet::Simplex { dim },
        }
    }

    pub fn dim(&self) -> usize {
        self.constraint.dim()
    }

    /// psi(x); zero at the constraint set's anchor. The entropic case is
    /// negative entropy shifted by log d so psi(uniform) = 0.
    pub fn psi(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            ProximalKind::Quadratic => 0.5 * x.norm_squared(),
            ProximalKind::Entropic => {
                let d = x.len() as f64;
                x.iter()
                    .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
                    .sum::<f64>()
                    + d.ln()
            }
        }
    }

    /// Primal norm of the setup (l2 for quadratic, l1 for entropic).
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            ProximalKind::Quadratic => x.norm(),
            ProximalKind::Entropic => x.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Dual norm (l2 for quadratic, l-infinity for entropic).
    pub fn dual_norm(&self, z: &DVector<f64>) -> f64 {
        match self.kind {
            ProximalKind::Quadratic => z.norm(),
            ProximalKind::Entropic => z.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }
}

/// l1 regularizer for the composite variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    L1 { weight: f64 },
}

impl Regularizer {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }
}

/// Pi(z, alpha) = argmin over the constraint set of <z, x> + psi(x)/alpha.
pub fn project(
    z: &DVector<f64>,
    alpha: f64,
    setup: &ProximalSetup,
) -> Result<DVector<f64>, ProximalError> {
    if !(alpha > 0.0) {
        return Err(ProximalError::NonPositiveStep(alpha));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ProximalError::NonFinite);
    }
    match (setup.kind, &setup.constraint) {
        (ProximalKind::Quadratic, ConstraintSet::Unconstrained { .. }) => Ok(-z * alpha),
        (ProximalKind::Quadratic, ConstraintSet::EuclideanBall { radius, .. }) => {
            let u = -z * alpha;
            let norm = u.norm();
            if norm <= *radius {
                Ok(u)
            } else {
                Ok(u * (*radius / norm))
            }
        }
        (ProximalKind::Quadratic, ConstraintSet::Box { lo, hi }) => {
            let mut u = -z * alpha;
            for (i, v) in u.iter_mut().enumerate() {
                *v = v.clamp(lo[i], hi[i]);
            }
            Ok(u)
        }
        (ProximalKind::Quadratic, ConstraintSet::Simplex { .. }) => {
            Ok(project_simplex_euclidean(&(-z * alpha)))
        }
        (ProximalKind::Entropic, ConstraintSet::Simplex { .. }) => {
            // Softmax of -alpha z, computed stably.
            let scaled = -z * alpha;
            let max = scaled.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let exps: DVector<f64> = scaled.map(|v| (v - max).exp());
            let sum = exps.sum();
            Ok(exps / sum)
        }
        (ProximalKind::Entropic, _) => Err(ProximalError::InvalidSetup(
            "entropic setup requires the simplex constraint".into(),
        )),
    }
}

/// Euclidean projection of a point onto the constraint set (used by the
/// subgradient baselines, which are Euclidean regardless of the proximal
/// setup).
pub fn euclidean_project(x: &DVector<f64>, constraint: &ConstraintSet) -> DVector<f64> {
    match constraint {
        ConstraintSet::Unconstrained { .. } => x.clone(),
        ConstraintSet::EuclideanBall { radius, .. } => {
            let norm = x.norm();
            if norm <= *radius {
                x.clone()
            } else {
                x * (*radius / norm)
            }
        }
        ConstraintSet::Box { lo, hi } => {
            let mut out = x.clone();
            for (i, v) in out.iter_mut().enumerate() {
                *v = v.clamp(lo[i], hi[i]);
            }
            out
        }
        ConstraintSet::Simplex { .. } => project_simplex_euclidean(x),
    }
}

/// Euclidean projection onto the probability simplex by sort-and-threshold.
fn project_simplex_euclidean(u: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = u.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    u.map(|v| (v - theta).max(0.0))
}

/// Composite projection: argmin <z, x> + t phi(x) + psi(x)/alpha.
/// Closed form only for quadratic psi with an l1 regularizer on the
/// unconstrained set or the Euclidean ball.
pub fn composite_project(
    z: &DVector<f64>,
    t: usize,
    alpha: f64,
    setup: &ProximalSetup,
    reg: &Regularizer,
) -> Result<DVector<f64>, ProximalError> {
    let weight = match reg {
        Regularizer::None => return project(z, alpha, setup),
        Regularizer::L1 { weight } => *weight,
    };
    if !(alpha > 0.0) {
        return Err(ProximalError::NonPositiveStep(alpha));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ProximalError::NonFinite);
    }
    if setup.kind != ProximalKind::Quadratic {
        return Err(ProximalError::UnsupportedComposite);
    }
    let threshold = t as f64 * weight;
    let u: DVector<f64> =
        z.map(|v| -alpha * v.signum() * (v.abs() - threshold).max(0.0));
    match &setup.constraint {
        ConstraintSet::Unconstrained { .. } => Ok(u),
        ConstraintSet::EuclideanBall { radius, .. } => {
            let norm = u.norm();
            if norm <= *radius {
                Ok(u)
            } else {
                Ok(u * (*radius / norm))
            }
        }
        _ => Err(ProximalError::UnsupportedComposite),
    }
}

/// Checks the projection contraction ||Pi(u) - Pi(v)|| <= alpha ||u - v||_*
/// in the setup's norm pair; returns (pass, measured ratio).
pub fn lipschitz_audit(
    setup: &ProximalSetup,
    alpha: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<(bool, f64), ProximalError> {
    let pu = project(u, alpha, setup)?;
    let pv = project(v, alpha, setup)?;
    let lhs = setup.norm(&(pu - pv));
    let rhs = alpha * setup.dual_norm(&(u - v));
    if rhs == 0.0 {
        return Ok((lhs <= 1e-12, if lhs == 0.0 { 0.0 } else { f64::INFINITY }));
    }
    let ratio = lhs / rhs;
    Ok((ratio <= 1.0 + 1e-8, ratio))
}
