//! Comparison algorithms: Markov incremental gradient descent (a single
//! iterate carried by a token random walk) and the distributed projected
//! subgradient method.

use crate::mixing::{migd_rate_constant, MixingMatrix, MixingError};
use crate::objectives::Objective;
use crate::proximal::euclidean_project;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Token-walk state: one shared primal iterate plus the active node.
pub struct MigdState {
    pub t: usize,
    pub x: DVector<f64>,
    pub token: usize,
    pub running_sum: DVector<f64>,
}

impl MigdState {
    pub fn new(d: usize, start_token: usize, anchor: DVector<f64>) -> Self {
        MigdState {
            t: 0,
            x: anchor,
            token: start_token,
            running_sum: DVector::zeros(d),
        }
    }

    pub fn running_average(&self) -> DVector<f64> {
        &self.running_sum / self.t.max(1) as f64
    }
}

/// One incremental step: descend along the active node's subgradient,
/// project back, then move the token to j with probability P[j][token].
pub fn migd_step<R: Rng>(
    state: &mut MigdState,
    obj: &dyn Objective,
    alpha_t: f64,
    p: &MixingMatrix,
    rng: &mut R,
) {
    let g = obj.node_subgradient(state.token, &state.x);
    state.x = euclidean_project(&(&state.x - g * alpha_t), &obj.setup().constraint);
    state.t += 1;
    state.running_sum += &state.x;

    let u: f64 = rng.random();
    let mut cum = 0.0;
    let col = state.token;
    for j in 0..p.n() {
        cum += p.entries()[(j, col)];
        if u < cum {
            state.token = j;
            return;
        }
    }
    state.token = p.n() - 1; // roundoff fallback
}

/// Decaying analogue of the optimal constant rate:
/// alpha(t) = r / (l sqrt(n max_i Gamma_ii t)).
pub fn migd_step_size(t: usize, r: f64, l: f64, rate_constant: f64) -> f64 {
    r / (l * (rate_constant * t.max(1) as f64).sqrt())
}

/// Per-node state of the distributed projected subgradient method.
pub struct DpgState {
    pub t: usize,
    pub x: Vec<DVector<f64>>,
    pub running_sum: Vec<DVector<f64>>,
}

impl DpgState {
    pub fn new(n: usize, anchor: DVector<f64>) -> Self {
        let d = anchor.len();
        DpgState {
            t: 0,
            x: vec![anchor; n],
            running_sum: vec![DVector::zeros(d); n],
        }
    }

    pub fn running_average(&self, i: usize) -> DVector<f64> {
        &self.running_sum[i] / self.t.max(1) as f64
    }
}

/// Synchronous round: x_i <- project(sum_j P[j][i] x_j - alpha g_i) with
/// g_i evaluated at the pre-round x_i.
pub fn dpg_step(state: &mut DpgState, obj: &dyn Objective, alpha_t: f64, p: &MixingMatrix) {
    let n = state.x.len();
    let d = obj.d();
    let mut new_x = Vec::with_capacity(n);
    for i in 0..n {
        let mut mixed = DVector::zeros(d);
        for j in 0..n {
            let w = p.entries()[(j, i)];
            if w != 0.0 {
                mixed += &state.x[j] * w;
            }
        }
        let g = obj.node_subgradient(i, &state.x[i]);
        new_x.push(euclidean_project(&(mixed - g * alpha_t), &obj.setup().constraint));
    }
    state.x = new_x;
    state.t += 1;
    for i in 0..n {
        state.running_sum[i] += &state.x[i];
    }
}

/// Horizon-aware constant step for the projected subgradient baseline.
pub fn dpg_step_size(t_horizon: usize, n: usize, r: f64, l: f64) -> f64 {
    l / ((n as f64).powf(1.5) * r * (t_horizon as f64).sqrt())
}

/// Summary of one baseline run, matching the distributed-run bookkeeping.
#[derive(Debug, Clone)]
pub struct BaselineRecord {
    pub t_final: usize,
    pub final_error: f64,
    pub t_eps: Option<usize>,
    pub hit_cap: bool,
}

/// Runs the token-walk baseline until the error target or the cap.
#[allow(clippy::too_many_arguments)]
pub fn run_migd(
    obj: &dyn Objective,
    p: &MixingMatrix,
    r: f64,
    t_max: usize,
    eval_every: usize,
    fstar: f64,
    stop_at_error: Option<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<BaselineRecord, MixingError> {
    let rate = migd_rate_constant(p)?;
    let l = obj.lipschitz();
    let start_token = rng.random_range(0..obj.n());
    let mut state = MigdState::new(obj.d(), start_token, obj.setup().constraint.anchor());
    let mut record = BaselineRecord {
        t_final: 0,
        final_error: f64::INFINITY,
        t_eps: None,
        hit_cap: false,
    };
    for t in 1..=t_max {
        let alpha = migd_step_size(t, r, l, rate);
        migd_step(&mut state, obj, alpha, p, rng);
        if t % eval_every == 0 || t == t_max {
            let err = obj.value(&state.running_average()) - fstar;
            record.final_error = err;
            record.t_final = t;
            if let Some(target) = stop_at_error {
                if err <= target {
                    record.t_eps = Some(t);
                    break;
                }
            }
        }
    }
    record.hit_cap = record.t_eps.is_none() && stop_at_error.is_some();
    Ok(record)
}

/// Runs the projected subgradient baseline with its horizon-tuned
/// constant step.
pub fn run_dpg(
    obj: &dyn Objective,
    p: &MixingMatrix,
    r: f64,
    t_max: usize,
    eval_every: usize,
    fstar: f64,
    stop_at_error: Option<f64>,
) -> BaselineRecord {
    let alpha = dpg_step_size(t_max, obj.n(), r, obj.lipschitz());
    let mut state = DpgState::new(obj.n(), obj.setup().constraint.anchor());
    let mut record = BaselineRecord {
        t_final: 0,
        final_error: f64::INFINITY,
        t_eps: None,
        hit_cap: false,
    };
    for t in 1..=t_max {
        dpg_step(&mut state, obj, alpha, p);
        if t % eval_every == 0 || t == t_max {
            let err = (0..obj.n())
                .map(|i| obj.value(&state.running_average(i)) - fstar)
                .fold(f64::NEG_INFINITY, f64::max);
            record.final_error = err;
            record.t_final = t;
            if let Some(target) = stop_at_error {
                if err <= target {
                    record.t_eps = Some(t);
                    break;
                }
            }
        }
    }
    record.hit_cap = record.t_eps.is_none() && stop_at_error.is_some();
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::mixing::max_degree_chain;
    use crate::objectives::{make_median_instance, median_default_setup, reference_optimum};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn migd_zero_step_moves_only_token() {
        let obj = make_median_instance(vec![-1.0, 0.0, 1.0], median_default_setup(&[-1.0, 0.0, 1.0]));
        let p = max_degree_chain(&build_cycle(3, 1).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut state = MigdState::new(1, 0, obj.setup().constraint.anchor());
        let x0 = state.x.clone();
        let mut moved = false;
        for _ in 0..20 {
            let before = state.token;
            migd_step(&mut state, &obj, 0.0, &p, &mut rng);
            assert_eq!(state.x, x0);
            moved |= state.token != before;
        }
        assert!(moved);
    }

    #[test]
    fn migd_single_node_is_projected_subgradient() {
        // n = 1: the token is pinned and the update is plain projected
        // subgradient descent on f_0.
        let obj = make_median_instance(vec![0.7], median_default_setup(&[0.7]));
        let p1 = MixingMatrix::new(nalgebra::DMatrix::from_element(1, 1, 1.0)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut state = MigdState::new(1, 0, obj.setup().constraint.anchor());
        let mut x_manual = obj.setup().constraint.anchor();
        for t in 1..=100 {
            let alpha = migd_step_size(t, 1.0, 1.0, 1.0);
            let g = obj.node_subgradient(0, &x_manual);
            x_manual = euclidean_project(&(&x_manual - g * alpha), &obj.setup().constraint);
            migd_step(&mut state, &obj, alpha, &p1, &mut rng);
            assert_eq!(state.token, 0);
            assert_abs_diff_eq!(state.x[0], x_manual[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn migd_converges_on_median() {
        let values = vec![-1.0, 0.0, 1.0];
        let obj = make_median_instance(values.clone(), median_default_setup(&values));
        let fstar = reference_optimum(&obj, 1e-6, 20_000).unwrap();
        let p = max_degree_chain(&build_cycle(3, 1).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let rec = run_migd(&obj, &p, 2.0, 10_000, 100, fstar, None, &mut rng).unwrap();
        assert!(rec.final_error <= 0.05, "final error {}", rec.final_error);
    }

    #[test]
    fn migd_token_occupancy_uniform() {
        let obj = make_median_instance(vec![0.0; 4], median_default_setup(&[0.0]));
        let p = max_degree_chain(&build_cycle(4, 1).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut state = MigdState::new(1, 0, obj.setup().constraint.anchor());
        let mut counts = [0usize; 4];
        let steps = 100_000;
        for _ in 0..steps {
            migd_step(&mut state, &obj, 0.0, &p, &mut rng);
            counts[state.token] += 1;
        }
        // Uniform stationary distribution: each node ~ steps/4 with
        // binomial standard deviation sqrt(steps * 1/4 * 3/4).
        let expect = steps as f64 / 4.0;
        let sigma = (steps as f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - expect).abs() <= 3.0 * sigma,
                "occupancy {c} vs expected {expect}"
            );
        }
    }

    #[test]
    fn dpg_identity_decouples_and_consensus_preserved() {
        let values = vec![-0.5, 0.5];
        let obj = make_median_instance(values.clone(), median_default_setup(&values));
        let id = MixingMatrix::new(nalgebra::DMatrix::identity(2, 2)).unwrap();
        let mut state = DpgState::new(2, obj.setup().constraint.anchor());
        // Solo runs per node.
        let mut solo: Vec<DVector<f64>> = vec![obj.setup().constraint.anchor(); 2];
        for _ in 0..100 {
            dpg_step(&mut state, &obj, 0.05, &id);
            for i in 0..2 {
                let g = obj.node_subgradient(i, &solo[i]);
                solo[i] = euclidean_project(&(&solo[i] - g * 0.05), &obj.setup().constraint);
                assert_abs_diff_eq!(state.x[i][0], solo[i][0], epsilon = 1e-14);
            }
        }

        // Identical objectives from a consensus start stay in consensus.
        let same = make_median_instance(vec![0.3; 3], median_default_setup(&[0.3]));
        let p = max_degree_chain(&build_cycle(3, 1).unwrap());
        let mut state = DpgState::new(3, same.setup().constraint.anchor());
        for _ in 0..50 {
            dpg_step(&mut state, &same, 0.02, &p);
            assert_abs_diff_eq!(state.x[0][0], state.x[1][0], epsilon = 1e-14);
            assert_abs_diff_eq!(state.x[1][0], state.x[2][0], epsilon = 1e-14);
        }
    }

    #[test]
    fn rate_constant_inequality_on_chains() {
        for g in [build_cycle(8, 1).unwrap(), build_cycle(16, 2).unwrap()] {
            let p = max_degree_chain(&g);
            let rc = migd_rate_constant(&p).unwrap();
            assert!(rc >= 1.0 / p.gap() - 1e-9, "{rc} < {}", 1.0 / p.gap());
        }
    }
}
