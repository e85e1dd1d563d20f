//! Dual averaging: the centralized method, the distributed synchronous
//! state machine (deterministic, random-protocol, noisy-gradient, and
//! composite variants), step-size schedules, and runtime auditors for
//! the convergence and deviation bounds.

use crate::mixing::{sample_protocol_matrix, MixingMatrix, ProtocolSpec};
use crate::objectives::{NoisyOracle, Objective};
use crate::proximal::{composite_project, project, ProximalSetup, Regularizer};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("projection failed: {0}")]
    Projection(#[from] crate::proximal::ProximalError),
}

/// Step-size schedule; always non-increasing, with alpha(0) = alpha(1)
/// so sums over alpha(t-1) are defined from the first round.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    /// Radius bound with psi(x*) <= r^2.
    pub r: f64,
    /// Gradient bound in the dual norm.
    pub l: f64,
    /// Spectral gap driving the schedule (1 - sigma2, or 1 - lambda2 of
    /// the expected squared protocol matrix for random communication).
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// alpha(t) = r sqrt(gap) / (4 l sqrt(t)).
    SqrtDecay,
    Constant(f64),
}

impl StepSchedule {
    pub fn sqrt_decay(r: f64, l: f64, gap: f64) -> Result<Self, DdaError> {
        if !(gap > 0.0) {
            return Err(DdaError::InvalidSchedule(format!("gap must be positive, got {gap}")));
        }
        if !(r > 0.0 && l > 0.0) {
            return Err(DdaError::InvalidSchedule("r and l must be positive".into()));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::SqrtDecay,
            r,
            l,
            gap,
        })
    }

    pub fn constant(value: f64, r: f64, l: f64) -> Result<Self, DdaError> {
        if !(value > 0.0) {
            return Err(DdaError::InvalidSchedule("constant step must be positive".into()));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Constant(value),
            r,
            l,
            gap: 1.0,
        })
    }

    /// alpha(t) for t >= 1; alpha(0) is defined as alpha(1).
    pub fn alpha(&self, t: usize) -> f64 {
        let t = t.max(1);
        match self.kind {
            ScheduleKind::SqrtDecay => self.r * self.gap.sqrt() / (4.0 * self.l * (t as f64).sqrt()),
            ScheduleKind::Constant(v) => v,
        }
    }
}

pub fn step_size(t: usize, schedule: &StepSchedule) -> f64 {
    schedule.alpha(t)
}

/// Theoretical uniform bound on the dual deviation ||zbar(t) - z_i(t)||_*
/// for a static chain over a horizon of T rounds.
pub fn deviation_bound_static(t_horizon: usize, n: usize, sigma2: f64, l: f64) -> Result<f64, DdaError> {
    if !(0.0..1.0).contains(&sigma2) {
        return Err(DdaError::InvalidSchedule(format!(
            "sigma2 must lie in [0,1), got {sigma2}"
        )));
    }
    let t = t_horizon as f64;
    Ok(2.0 * l * (t * (n as f64).sqrt()).ln() / (1.0 - sigma2) + 3.0 * l)
}

/// Deviation bound for i.i.d. random protocols, holding with probability
/// at least 1 - 1/T; lambda2 refers to the expected squared protocol
/// matrix E[P(t)^T P(t)].
pub fn deviation_bound_stochastic(
    t_horizon: usize,
    n: usize,
    lambda2: f64,
    l: f64,
) -> Result<f64, DdaError> {
    if !(0.0..1.0).contains(&lambda2) {
        return Err(DdaError::InvalidSchedule(format!(
            "lambda2 must lie in [0,1), got {lambda2}"
        )));
    }
    let t = t_horizon as f64;
    let n_f = n as f64;
    Ok(6.0 * l * (t * t * n_f).ln() / (1.0 - lambda2) + l / (t * n_f.sqrt()) + 2.0 * l)
}

/// Centralized dual averaging: z accumulates subgradients of the global
/// objective, x = Pi(z, alpha(t)).
pub struct CentralizedState {
    pub t: usize,
    pub z: DVector<f64>,
    pub x: DVector<f64>,
    pub running_sum: DVector<f64>,
    setup: ProximalSetup,
}

impl CentralizedState {
    pub fn new(setup: ProximalSetup) -> Self {
        let d = setup.dim();
        CentralizedState {
            t: 0,
            z: DVector::zeros(d),
            x: setup.constraint.anchor(),
            running_sum: DVector::zeros(d),
            setup,
        }
    }

    pub fn step(&mut self, g: &DVector<f64>, schedule: &StepSchedule) -> Result<(), DdaError> {
        self.z += g;
        self.t += 1;
        self.x = project(&self.z, schedule.alpha(self.t), &self.setup)?;
        self.running_sum += &self.x;
        Ok(())
    }

    pub fn running_average(&self) -> DVector<f64> {
        &self.running_sum / self.t.max(1) as f64
    }
}

/// Per-node state of the synchronous distributed method, with online
/// accumulators for the convergence-bound auditors.
pub struct NetworkState {
    pub t: usize,
    pub z: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub running_sum: Vec<DVector<f64>>,
    /// Mean of the dual vectors, tracked incrementally and re-verified
    /// against the direct mean every round.
    pub zbar: DVector<f64>,
    /// Auxiliary iterate: the projection of zbar under the same schedule.
    pub y: DVector<f64>,
    pub y_running_sum: DVector<f64>,
    /// Current dual deviations ||zbar - z_i||_*.
    pub deviations: Vec<f64>,
    /// Largest deviation seen over all rounds and nodes.
    pub max_deviation: f64,
    /// sum over rounds of alpha(t - 1).
    pub sum_alpha_prev: f64,
    /// sum over rounds of alpha(t).
    pub sum_alpha: f64,
    /// sum over rounds and nodes of alpha(t) * deviation_j(t).
    pub sum_alpha_dev_all: f64,
    /// per node: sum over rounds of alpha(t) * deviation_i(t).
    pub sum_alpha_dev_node: Vec<f64>,
    /// Rounds in which some supplied subgradient exceeded the schedule's
    /// L bound (warned, not fatal).
    pub subgrad_norm_violations: usize,
    setup: ProximalSetup,
    reg: Regularizer,
}

impl NetworkState {
    pub fn new(n: usize, setup: ProximalSetup) -> Self {
        Self::with_regularizer(n, setup, Regularizer::None)
    }

    pub fn with_regularizer(n: usize, setup: ProximalSetup, reg: Regularizer) -> Self {
        let d = setup.dim();
        let anchor = setup.constraint.anchor();
        NetworkState {
            t: 0,
            z: vec![DVector::zeros(d); n],
            x: vec![anchor.clone(); n],
            running_sum: vec![DVector::zeros(d); n],
            zbar: DVector::zeros(d),
            y: anchor,
            y_running_sum: DVector::zeros(d),
            deviations: vec![0.0; n],
            max_deviation: 0.0,
            sum_alpha_prev: 0.0,
            sum_alpha: 0.0,
            sum_alpha_dev_all: 0.0,
            sum_alpha_dev_node: vec![0.0; n],
            subgrad_norm_violations: 0,
            setup,
            reg,
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn d(&self) -> usize {
        self.zbar.len()
    }

    pub fn setup(&self) -> &ProximalSetup {
        &self.setup
    }

    /// One synchronous round: z_i <- sum_j P[i][j] z_j + g_i computed
    /// from the pre-round snapshot for all nodes at once, then the primal
    /// projection with the new round's step size.
    pub fn step(
        &mut self,
        p: &DMatrix<f64>,
        grads: &[DVector<f64>],
        schedule: &StepSchedule,
    ) -> Result<(), DdaError> {
        let n = self.n();
        if p.nrows() != n || p.ncols() != n {
            return Err(DdaError::DimensionMismatch(format!(
                "matrix is {}x{}, state has {n} nodes",
                p.nrows(),
                p.ncols()
            )));
        }
        if grads.len() != n {
            return Err(DdaError::DimensionMismatch(format!(
                "{} gradients for {n} nodes",
                grads.len()
            )));
        }
        if grads
            .iter()
            .any(|g| self.setup.dual_norm(g) > schedule.l * (1.0 + 1e-9))
        {
            self.subgrad_norm_violations += 1;
        }

        self.sum_alpha_prev += schedule.alpha(self.t); // alpha(t - 1) after increment
        let mut gbar = DVector::zeros(self.d());
        for g in grads {
            gbar += g;
        }
        gbar /= n as f64;

        // Double-buffered dual update.
        let mut new_z = Vec::with_capacity(n);
        for i in 0..n {
            let mut zi = grads[i].clone();
            for j in 0..n {
                let w = p[(i, j)];
                if w != 0.0 {
                    zi += &self.z[j] * w;
                }
            }
            new_z.push(zi);
        }
        self.z = new_z;
        self.t += 1;

        // Mean-dual evolution: zbar moves by the average gradient. Verify
        // the incremental value against the direct mean.
        self.zbar += &gbar;
        let mut direct = DVector::zeros(self.d());
        for zi in &self.z {
            direct += zi;
        }
        direct /= n as f64;
        let drift = (&direct - &self.zbar).abs().max();
        assert!(
            drift <= 1e-10 * (1.0 + self.zbar.abs().max()),
            "mean-dual evolution identity violated: drift {drift} at round {}",
            self.t
        );
        self.zbar = direct;

        let alpha = schedule.alpha(self.t);
        self.sum_alpha += alpha;
        for i in 0..n {
            self.x[i] = match self.reg {
                Regularizer::None => project(&self.z[i], alpha, &self.setup)?,
                reg @ Regularizer::L1 { .. } => {
                    composite_project(&self.z[i], self.t, alpha, &self.setup, &reg)?
                }
            };
            self.running_sum[i] += &self.x[i];
            let dev = self.setup.dual_norm(&(&self.zbar - &self.z[i]));
            self.deviations[i] = dev;
            self.max_deviation = self.max_deviation.max(dev);
            self.sum_alpha_dev_all += alpha * dev;
            self.sum_alpha_dev_node[i] += alpha * dev;
        }
        self.y = match self.reg {
            Regularizer::None => project(&self.zbar, alpha, &self.setup)?,
            reg @ Regularizer::L1 { .. } => {
                composite_project(&self.zbar, self.t, alpha, &self.setup, &reg)?
            }
        };
        self.y_running_sum += &self.y;
        Ok(())
    }

    /// Running local average xhat_i(t) = (1/t) sum of x_i over rounds.
    pub fn running_average(&self, i: usize) -> DVector<f64> {
        &self.running_sum[i] / self.t.max(1) as f64
    }

    pub fn y_running_average(&self) -> DVector<f64> {
        &self.y_running_sum / self.t.max(1) as f64
    }

    /// Master error bound at the current horizon, for the worst node:
    /// psi(x*)/(T alpha(T)) + L^2/(2T) sum alpha(t-1)
    /// + (2L/(nT)) sum_t sum_j alpha(t) dev_j(t)
    /// + (L/T) max_i sum_t alpha(t) dev_i(t).
    pub fn master_bound_rhs(&self, schedule: &StepSchedule, psi_xstar: f64) -> f64 {
        let t = self.t.max(1) as f64;
        let l = schedule.l;
        let n = self.n() as f64;
        let worst_node = self
            .sum_alpha_dev_node
            .iter()
            .fold(0.0f64, |m, &v| m.max(v));
        psi_xstar / (t * schedule.alpha(self.t))
            + l * l / (2.0 * t) * self.sum_alpha_prev
            + 2.0 * l / (n * t) * self.sum_alpha_dev_all
            + l / t * worst_node
    }

    /// Expected-error bound for noisy gradients on a static chain:
    /// psi(x*)/(T alpha(T)) + (8 L^2/T) sum alpha(t-1)
    /// + (3 L^2/T) (log(T sqrt(n)) / (1 - sigma2)) sum alpha(t).
    pub fn stochastic_bound_rhs(&self, schedule: &StepSchedule, psi_xstar: f64, sigma2: f64) -> f64 {
        let t = self.t.max(1) as f64;
        let l = schedule.l;
        let n = self.n() as f64;
        psi_xstar / (t * schedule.alpha(self.t))
            + 8.0 * l * l / t * self.sum_alpha_prev
            + 3.0 * l * l / t * ((t * n.sqrt()).ln() / (1.0 - sigma2)) * self.sum_alpha
    }

    /// Right-hand side of the transfer inequality for node i:
    /// f(yhat) - f* + (L/T) sum_t alpha(t) dev_i(t) bounds f(xhat_i) - f*.
    pub fn transfer_rhs(&self, i: usize, schedule: &StepSchedule, yhat_error: f64) -> f64 {
        yhat_error + schedule.l / self.t.max(1) as f64 * self.sum_alpha_dev_node[i]
    }
}

/// Communication model for a run.
pub enum Communication<'a> {
    /// Same matrix every round.
    Static(&'a MixingMatrix),
    /// Fresh i.i.d. sample each round.
    Random(&'a ProtocolSpec),
}

/// Run controls shared by all drivers.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_max: usize,
    pub eval_every: usize,
    /// Stop at the first evaluation with max-node error <= this target.
    pub stop_at_error: Option<f64>,
    /// Reference optimum used for error evaluation.
    pub fstar: f64,
    /// Bound on psi(x*) used by the bound auditors (r^2 is always valid).
    pub psi_xstar: f64,
}

/// Time series and summary of one distributed run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub eval_times: Vec<usize>,
    /// max_i f(xhat_i(t)) - f* at each evaluation.
    pub max_errors: Vec<f64>,
    /// Master-bound auditor value at each evaluation.
    pub master_bound_rhs: Vec<f64>,
    /// f(yhat(t)) - f* at each evaluation.
    pub yhat_errors: Vec<f64>,
    /// Worst-node transfer-bound value at each evaluation.
    pub transfer_rhs: Vec<f64>,
    pub max_deviation: f64,
    pub t_final: usize,
    pub final_error: f64,
    /// First evaluation time with error <= stop_at_error, if reached.
    pub t_eps: Option<usize>,
    pub hit_cap: bool,
    pub subgrad_norm_violations: usize,
}

/// Synchronous distributed dual averaging with optional random
/// communication, gradient noise, and l1 regularization. The rng drives
/// protocol sampling and gradient noise only; deterministic configs
/// never consume it.
pub fn run_distributed(
    obj: &dyn Objective,
    comm: Communication,
    schedule: &StepSchedule,
    cfg: &RunConfig,
    noise: Option<&NoisyOracle>,
    reg: Regularizer,
    rng: &mut ChaCha12Rng,
) -> Result<RunRecord, DdaError> {
    let n = obj.n();
    let mut state = NetworkState::with_regularizer(n, obj.setup().clone(), reg);
    let mut record = RunRecord {
        eval_times: Vec::new(),
        max_errors: Vec::new(),
        master_bound_rhs: Vec::new(),
        yhat_errors: Vec::new(),
        transfer_rhs: Vec::new(),
        max_deviation: 0.0,
        t_final: 0,
        final_error: f64::INFINITY,
        t_eps: None,
        hit_cap: false,
        subgrad_norm_violations: 0,
    };
    let mut grads: Vec<DVector<f64>> = Vec::with_capacity(n);
    for t in 1..=cfg.t_max {
        grads.clear();
        for i in 0..n {
            let g = obj.node_subgradient(i, &state.x[i]);
            grads.push(match noise {
                Some(oracle) => oracle.sample(&g, rng),
                None => g,
            });
        }
        match &comm {
            Communication::Static(p) => state.step(p.entries(), &grads, schedule)?,
            Communication::Random(spec) => {
                let p = sample_protocol_matrix(spec, rng);
                state.step(p.entries(), &grads, schedule)?;
            }
        }
        if t % cfg.eval_every == 0 || t == cfg.t_max {
            let mut max_err = f64::NEG_INFINITY;
            let mut worst = 0;
            for i in 0..n {
                let err = obj.value(&state.running_average(i)) - cfg.fstar;
                if err > max_err {
                    max_err = err;
                    worst = i;
                }
            }
            let yhat_err = obj.value(&state.y_running_average()) - cfg.fstar;
            record.eval_times.push(t);
            record.max_errors.push(max_err);
            record.master_bound_rhs.push(state.master_bound_rhs(schedule, cfg.psi_xstar));
            record.yhat_errors.push(yhat_err);
            record.transfer_rhs.push(state.transfer_rhs(worst, schedule, yhat_err));
            record.final_error = max_err;
            record.t_final = t;
            if let Some(target) = cfg.stop_at_error {
                if max_err <= target {
                    record.t_eps = Some(t);
                    break;
                }
            }
        }
    }
    record.max_deviation = state.max_deviation;
    record.subgrad_norm_violations = state.subgrad_norm_violations;
    record.hit_cap = record.t_eps.is_none() && cfg.stop_at_error.is_some();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::mixing::{max_degree_chain, ProtocolKind};
    use crate::objectives::{
        make_hard_instance, make_median_instance, median_default_setup, reference_optimum,
    };
    use crate::proximal::ConstraintSet;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn schedule_values() {
        let s = StepSchedule::sqrt_decay(1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.alpha(1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.alpha(0), s.alpha(1), epsilon = 1e-15);
        let s = StepSchedule::sqrt_decay(1.0, 1.0, 0.25).unwrap();
        assert_abs_diff_eq!(s.alpha(16), 1.0 / 32.0, epsilon = 1e-15);
        assert!(StepSchedule::sqrt_decay(1.0, 1.0, 0.0).is_err());
        // Non-increasing.
        let s = StepSchedule::sqrt_decay(2.0, 0.5, 0.3).unwrap();
        for t in 1..100 {
            assert!(s.alpha(t + 1) <= s.alpha(t));
        }
    }

    #[test]
    fn deviation_bounds_shape() {
        let b = deviation_bound_static(100, 4, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(b, 2.0 * (100.0f64 * 2.0).ln() + 3.0, epsilon = 1e-12);
        assert!(deviation_bound_static(10, 4, 1.0, 1.0).is_err());
        // Monotone increasing in sigma2.
        let mut prev = 0.0;
        for k in 0..9 {
            let b = deviation_bound_static(1000, 8, k as f64 / 10.0, 1.0).unwrap();
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn centralized_median_fixed_point() {
        // f(x) = |x| on [-1, 1] starting at the optimum with kink
        // subgradient 0: the iterate never moves.
        let obj = make_median_instance(vec![0.0], median_default_setup(&[0.0]));
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, 1.0).unwrap();
        let mut state = CentralizedState::new(obj.setup().clone());
        for _ in 0..50 {
            let g = obj.subgradient(&state.x);
            state.step(&g, &schedule).unwrap();
            assert_eq!(state.x[0], 0.0);
        }
    }

    #[test]
    fn centralized_constant_gradient_closed_form() {
        let setup = ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 1 });
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, 1.0).unwrap();
        let mut state = CentralizedState::new(setup);
        let c = 0.7;
        let g = DVector::from_element(1, c);
        for t in 1..=20 {
            state.step(&g, &schedule).unwrap();
            assert_abs_diff_eq!(state.x[0], -schedule.alpha(t) * t as f64 * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn ftrl_linear_inequality_audit() {
        // sum <g(t), x(t) - x*> <= psi(x*)/alpha(T)
        //                         + (1/2) sum alpha(t-1) ||g(t)||^2
        // for arbitrary bounded gradient streams and arbitrary x*.
        // x(t) is the iterate the stream sees BEFORE g(t) arrives.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let setup = ProximalSetup::quadratic(ConstraintSet::EuclideanBall { dim: 3, radius: 2.0 });
        let schedule = StepSchedule::sqrt_decay(2.0f64.sqrt(), 1.0, 1.0).unwrap();
        for _ in 0..10 {
            let mut xstar = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if xstar.norm() > 2.0 {
                xstar *= 2.0 / xstar.norm();
            }
            let mut state = CentralizedState::new(setup.clone());
            let mut lhs = 0.0;
            let mut quad = 0.0;
            for t in 1..=100 {
                let mut g = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let norm = g.norm();
                if norm > 1.0 {
                    g /= norm;
                }
                lhs += g.dot(&(&state.x - &xstar));
                quad += 0.5 * schedule.alpha(t - 1) * g.norm_squared();
                state.step(&g, &schedule).unwrap();
            }
            let rhs = setup.psi(&xstar) / schedule.alpha(100) + quad;
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn two_node_cancellation() {
        let setup = ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 1 });
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, 1.0).unwrap();
        let mut state = NetworkState::new(2, setup);
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let grads = vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)];
        state.step(&p, &grads, &schedule).unwrap();
        state.step(&p, &grads, &schedule).unwrap();
        // After mixing, the previous duals cancel; each round re-adds g.
        assert_abs_diff_eq!(state.z[0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.z[1][0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.zbar[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_node_matches_centralized() {
        let obj = make_median_instance(vec![0.3], median_default_setup(&[0.3]));
        let schedule = StepSchedule::sqrt_decay(1.3, 1.0, 1.0).unwrap();
        let mut net = NetworkState::new(1, obj.setup().clone());
        let mut central = CentralizedState::new(obj.setup().clone());
        let p = DMatrix::identity(1, 1);
        for _ in 0..200 {
            let g_net = obj.node_subgradient(0, &net.x[0]);
            let g_cen = obj.subgradient(&central.x);
            net.step(&p, &[g_net], &schedule).unwrap();
            central.step(&g_cen, &schedule).unwrap();
            assert_abs_diff_eq!(net.x[0][0], central.x[0], epsilon = 1e-14);
        }
        // Deviation terms vanish: the bound reduces to the centralized one.
        let rhs = net.master_bound_rhs(&schedule, 0.0);
        let t = 200.0;
        assert_abs_diff_eq!(rhs, 1.0 / (2.0 * t) * net.sum_alpha_prev, epsilon = 1e-12);
    }

    #[test]
    fn master_bound_holds_on_cycle_median() {
        // Four nodes on a cycle, f_i(x) = |x - y_i| with y = (-1,0,0,1).
        let obj = make_median_instance(
            vec![-1.0, 0.0, 0.0, 1.0],
            median_default_setup(&[-1.0, 0.0, 0.0, 1.0]),
        );
        let p = max_degree_chain(&build_cycle(4, 1).unwrap());
        let r = crate::objectives::proximal_radius(obj.setup());
        let schedule = StepSchedule::sqrt_decay(r, 1.0, p.gap()).unwrap();
        let fstar = reference_optimum(&obj, 1e-6, 50_000).unwrap();
        let cfg = RunConfig {
            t_max: 5000,
            eval_every: 10,
            stop_at_error: None,
            fstar,
            psi_xstar: r * r,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let record = run_distributed(
            &obj,
            Communication::Static(&p),
            &schedule,
            &cfg,
            None,
            Regularizer::None,
            &mut rng,
        )
        .unwrap();
        for (k, &t) in record.eval_times.iter().enumerate() {
            assert!(
                record.max_errors[k] <= record.master_bound_rhs[k] + 1e-9,
                "master bound violated at t={t}: {} > {}",
                record.max_errors[k],
                record.master_bound_rhs[k]
            );
            assert!(
                record.max_errors[k] <= record.transfer_rhs[k] + 1e-9,
                "transfer bound violated at t={t}"
            );
        }
        // Static deviation bound over the whole run.
        let bound = deviation_bound_static(5000, 4, p.sigma2(), 1.0).unwrap();
        assert!(record.max_deviation <= bound);
        assert_eq!(record.subgrad_norm_violations, 0);
    }

    #[test]
    fn deterministic_and_protocol_zero_failure_matches_static() {
        let obj = make_median_instance(
            vec![-1.0, 0.5, 1.0, 0.0],
            median_default_setup(&[-1.0, 0.5, 1.0, 0.0]),
        );
        let g = build_cycle(4, 1).unwrap();
        let p = max_degree_chain(&g);
        let lazy_p = crate::mixing::lazy(&p);
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, lazy_p.gap()).unwrap();
        let cfg = RunConfig {
            t_max: 300,
            eval_every: 10,
            stop_at_error: None,
            fstar: 0.0,
            psi_xstar: 1.0,
        };
        let spec = ProtocolSpec::new(ProtocolKind::EdgeFailure, g, 0.0).unwrap();
        let run = |seed: u64, comm_static: bool| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let comm = if comm_static {
                Communication::Static(&lazy_p)
            } else {
                Communication::Random(&spec)
            };
            run_distributed(&obj, comm, &schedule, &cfg, None, Regularizer::None, &mut rng).unwrap()
        };
        let a = run(1, false);
        let b = run(1, false);
        assert_eq!(a.max_errors, b.max_errors); // bit-identical reruns
        // rho = 0 failure protocol (lazy by default) equals the static
        // lazy chain.
        let c = run(1, true);
        assert_eq!(a.max_errors, c.max_errors);
    }

    #[test]
    fn hard_instance_dual_matches_closed_form() {
        let p = crate::mixing::lazy(&max_degree_chain(&build_cycle(8, 1).unwrap()));
        let inst = make_hard_instance(&p, 1.0 / 3.0).unwrap();
        let schedule = StepSchedule::sqrt_decay(1.0, inst.lipschitz(), p.gap()).unwrap();
        let mut state = NetworkState::new(8, inst.setup().clone());
        for s in 1..=200 {
            let grads: Vec<DVector<f64>> = (0..8)
                .map(|i| inst.node_subgradient(i, &state.x[i]))
                .collect();
            state.step(p.entries(), &grads, &schedule).unwrap();
            assert_abs_diff_eq!(
                state.z[inst.i_star][0],
                inst.z_istar_closed_form(s),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn composite_reduces_and_pins() {
        let p = max_degree_chain(&build_cycle(3, 1).unwrap());
        let obj3 = make_median_instance(
            vec![-0.4, 0.6, 0.1],
            ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 1 }),
        );
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, p.gap().max(0.1)).unwrap();
        let cfg = RunConfig {
            t_max: 200,
            eval_every: 10,
            stop_at_error: None,
            fstar: 0.0,
            psi_xstar: 1.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let plain = run_distributed(
            &obj3,
            Communication::Static(&p),
            &schedule,
            &cfg,
            None,
            Regularizer::None,
            &mut rng,
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let zero_reg = run_distributed(
            &obj3,
            Communication::Static(&p),
            &schedule,
            &cfg,
            None,
            Regularizer::L1 { weight: 0.0 },
            &mut rng,
        )
        .unwrap();
        assert_eq!(plain.max_errors, zero_reg.max_errors);

        // Huge l1 weight: soft threshold kills every dual coordinate.
        let mut state = NetworkState::with_regularizer(
            3,
            obj3.setup().clone(),
            Regularizer::L1 { weight: 100.0 },
        );
        for _ in 0..50 {
            let grads: Vec<DVector<f64>> = (0..3)
                .map(|i| obj3.node_subgradient(i, &state.x[i]))
                .collect();
            state.step(p.entries(), &grads, &schedule).unwrap();
            for x in &state.x {
                assert_eq!(x[0], 0.0);
            }
        }
    }

    #[test]
    fn label_permutation_equivariance() {
        // Permuting node labels together with the matrix permutes the
        // trajectory exactly.
        let values = vec![-1.0, 0.2, 0.9, 0.5];
        let perm = [2usize, 0, 3, 1];
        let obj = make_median_instance(values.clone(), median_default_setup(&values));
        let permuted_values: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
        let obj_p = make_median_instance(permuted_values, median_default_setup(&values));
        let p = max_degree_chain(&build_cycle(4, 1).unwrap());
        let mut pp = DMatrix::zeros(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                pp[(a, b)] = p.entries()[(perm[a], perm[b])];
            }
        }
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, p.gap()).unwrap();
        let mut s1 = NetworkState::new(4, obj.setup().clone());
        let mut s2 = NetworkState::new(4, obj_p.setup().clone());
        for _ in 0..100 {
            let g1: Vec<DVector<f64>> = (0..4).map(|i| obj.node_subgradient(i, &s1.x[i])).collect();
            let g2: Vec<DVector<f64>> =
                (0..4).map(|i| obj_p.node_subgradient(i, &s2.x[i])).collect();
            s1.step(p.entries(), &g1, &schedule).unwrap();
            s2.step(&pp, &g2, &schedule).unwrap();
            for a in 0..4 {
                assert_abs_diff_eq!(s2.x[a][0], s1.x[perm[a]][0], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let setup = ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 1 });
        let schedule = StepSchedule::sqrt_decay(1.0, 1.0, 1.0).unwrap();
        let mut state = NetworkState::new(2, setup);
        let p = DMatrix::identity(3, 3);
        let grads = vec![DVector::zeros(1); 2];
        assert!(state.step(&p, &grads, &schedule).is_err());
    }
}
