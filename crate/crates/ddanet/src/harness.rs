//! Experiment harness: flat key=value configs, deterministic seed
//! splitting, iteration-to-accuracy measurement, network-scaling sweeps
//! with log-log slope fits, the worst-case lower-bound demonstration,
//! the invariant audit battery, and spectral reports. CSV is the output
//! contract.

use crate::baselines::{run_dpg, run_migd};
use crate::dda::{
    deviation_bound_static, run_distributed, Communication, NetworkState, RunConfig, RunRecord,
    StepSchedule,
};
use crate::graph::{
    build_cycle, build_grid, build_path, build_random_geometric, build_random_regular,
    cheeger_constant_exact, normalized_laplacian, rgg_default_radius, Graph, GraphError,
};
use crate::mixing::{
    expected_protocol_matrix, lambda2_expected_ptp, lazy, max_degree_chain, migd_rate_constant,
    sample_protocol_matrix, tv_to_uniform, MatrixChain, MixingError, MixingMatrix, ProtocolKind,
    ProtocolSpec,
};
use crate::objectives::{
    make_hard_instance, make_median_instance, make_svm_instance, median_default_setup,
    proximal_radius, reference_optimum, svm_default_setup, wrap_noisy, NoiseKind, Objective,
    ObjectiveError,
};
use crate::proximal::{lipschitz_audit, ConstraintSet, ProximalSetup, Regularizer};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

pub const CSV_HEADER: &str =
    "family,n,k,algo,protocol,trial,seed,sigma2,gap,epsilon,T_eps,hit_cap,final_error";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mixing(#[from] MixingError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dda(#[from] crate::dda::DdaError),
    #[error("sweep failed: {0}")]
    Sweep(String),
}

/// Everything needed to reproduce a run. Parses from (and serializes to)
/// a flat key=value file; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// cycle | path | grid | grid-toroidal | rgg | expander
    pub family: String,
    pub n: usize,
    /// Connectivity parameter for cycle/path/grid families.
    pub k: usize,
    /// Expander degree.
    pub degree: usize,
    /// dda | dda-stochgrad | dda-composite | migd | dpg
    pub algo: String,
    /// static | gossip | edge-inclusion | edge-failure
    pub protocol: String,
    pub failure_prob: f64,
    /// svm | median | hard
    pub objective: String,
    pub dim: usize,
    pub flip_prob: f64,
    /// uniform | signflip (dda-stochgrad only)
    pub noise_kind: String,
    pub noise_scale: f64,
    /// l1 weight for dda-composite.
    pub l1_weight: f64,
    /// Slope offset of the worst-case instance.
    pub hard_c: f64,
    pub epsilon: f64,
    pub t_max: usize,
    pub eval_every: usize,
    pub trials: usize,
    pub seed: u64,
    /// Iterations of the centralized reference-optimum solver.
    pub ref_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: "cycle".into(),
            n: 8,
            k: 1,
            degree: 5,
            algo: "dda".into(),
            protocol: "static".into(),
            failure_prob: 0.1,
            objective: "svm".into(),
            dim: 5,
            flip_prob: 0.05,
            noise_kind: "uniform".into(),
            noise_scale: 0.1,
            l1_weight: 0.1,
            hard_c: 1.0 / 3.0,
            epsilon: 0.1,
            t_max: 200_000,
            eval_every: 10,
            trials: 10,
            seed: 12345,
            ref_iters: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    /// Parses `key=value` lines; `#` starts a comment; blank lines are
    /// skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
            value
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "family" => self.family = value.to_string(),
            "n" => self.n = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "algo" => self.algo = value.to_string(),
            "protocol" => self.protocol = value.to_string(),
            "failure_prob" => self.failure_prob = num(key, value)?,
            "objective" => self.objective = value.to_string(),
            "dim" => self.dim = num(key, value)?,
            "flip_prob" => self.flip_prob = num(key, value)?,
            "noise_kind" => self.noise_kind = value.to_string(),
            "noise_scale" => self.noise_scale = num(key, value)?,
            "l1_weight" => self.l1_weight = num(key, value)?,
            "hard_c" => self.hard_c = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ref_iters" => self.ref_iters = num(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key: {key}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "family={}\nn={}\nk={}\ndegree={}\nalgo={}\nprotocol={}\nfailure_prob={}\nobjective={}\ndim={}\nflip_prob={}\nnoise_kind={}\nnoise_scale={}\nl1_weight={}\nhard_c={}\nepsilon={}\nt_max={}\neval_every={}\ntrials={}\nseed={}\nref_iters={}\n",
            self.family, self.n, self.k, self.degree, self.algo, self.protocol,
            self.failure_prob, self.objective, self.dim, self.flip_prob, self.noise_kind,
            self.noise_scale, self.l1_weight, self.hard_c, self.epsilon, self.t_max,
            self.eval_every, self.trials, self.seed, self.ref_iters,
        )
    }

    /// Base seed, honoring the DDANET_SEED environment override.
    pub fn effective_seed(&self) -> u64 {
        match std::env::var("DDANET_SEED") {
            Ok(v) => v.parse().unwrap_or(self.seed),
            Err(_) => self.seed,
        }
    }
}

/// Stable seed splitting (FNV-1a over the identifying tuple) so adding
/// trials or families never perturbs existing streams.
pub fn child_seed(base: u64, family: &str, n: usize, trial: usize, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&base.to_le_bytes());
    eat(family.as_bytes());
    eat(&(n as u64).to_le_bytes());
    eat(&(trial as u64).to_le_bytes());
    eat(tag.as_bytes());
    h
}

/// Builds the configured graph family at size n; random families draw
/// their structure from the per-trial seed.
pub fn build_graph(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<Graph, HarnessError> {
    let seed = child_seed(cfg.effective_seed(), &cfg.family, n, trial, "graph");
    let g = match cfg.family.as_str() {
        "cycle" => build_cycle(n, cfg.k)?,
        "path" => build_path(n, cfg.k)?,
        "grid" | "grid-toroidal" => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(HarnessError::Config(format!(
                    "grid family needs a square n, got {n}"
                )));
            }
            build_grid(side, cfg.k, cfg.family == "grid-toroidal")?
        }
        "rgg" => build_random_geometric(n, rgg_default_radius(n, 1.0), seed)?,
        "expander" => build_random_regular(n, cfg.degree, seed)?,
        other => return Err(HarnessError::Config(format!("unknown family: {other}"))),
    };
    Ok(g)
}

fn protocol_kind(cfg: &ExperimentConfig) -> Result<Option<ProtocolKind>, HarnessError> {
    Ok(match cfg.protocol.as_str() {
        "static" => None,
        "gossip" => Some(ProtocolKind::Gossip),
        "edge-inclusion" => Some(ProtocolKind::EdgeInclusion),
        "edge-failure" => Some(ProtocolKind::EdgeFailure),
        other => {
            return Err(HarnessError::Config(format!("unknown protocol: {other}")));
        }
    })
}

fn build_objective(
    cfg: &ExperimentConfig,
    n: usize,
    trial: usize,
    chain: &MixingMatrix,
) -> Result<Box<dyn Objective>, HarnessError> {
    let seed = child_seed(cfg.effective_seed(), &cfg.family, n, trial, "objective");
    match cfg.objective.as_str() {
        "svm" => Ok(Box::new(make_svm_instance(
            n,
            cfg.dim,
            cfg.flip_prob,
            seed,
            svm_default_setup(cfg.dim),
        )?)),
        "median" => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let setup = median_default_setup(&values);
            Ok(Box::new(make_median_instance(values, setup)))
        }
        "hard" => Ok(Box::new(make_hard_instance(&lazy(chain), cfg.hard_c)?)),
        other => Err(HarnessError::Config(format!("unknown objective: {other}"))),
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub family: String,
    pub n: usize,
    pub k: usize,
    pub algo: String,
    pub protocol: String,
    pub trial: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub gap: f64,
    pub epsilon: f64,
    pub t_eps: usize,
    pub hit_cap: bool,
    pub final_error: f64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.n,
            self.k,
            self.algo,
            self.protocol,
            self.trial,
            self.seed,
            self.sigma2,
            self.gap,
            self.epsilon,
            self.t_eps,
            self.hit_cap,
            self.final_error
        )
    }
}

/// Runs one configured trial at size n and measures the first audited
/// round with max-node error <= epsilon. Returns the CSV row plus the
/// full run record for dda algorithms (None for baselines).
pub fn measure_t_epsilon(
    cfg: &ExperimentConfig,
    n: usize,
    trial: usize,
) -> Result<(SweepRow, Option<RunRecord>), HarnessError> {
    let base = cfg.effective_seed();
    let graph = build_graph(cfg, n, trial)?;
    let chain = max_degree_chain(&graph);
    let obj = build_objective(cfg, n, trial, &chain)?;
    let run_seed = child_seed(base, &cfg.family, n, trial, "run");
    let mut rng = ChaCha12Rng::seed_from_u64(run_seed);

    let kind = protocol_kind(cfg)?;
    let spec = match kind {
        Some(k) => Some(ProtocolSpec::new(k, graph.clone(), cfg.failure_prob)?),
        None => None,
    };
    // Contraction quantity driving the schedule and the reporting:
    // sigma2 of the chain for static runs, lambda2 of the expected
    // squared protocol matrix otherwise.
    let sigma2 = match &spec {
        None => chain.sigma2(),
        Some(s) => {
            let mut ptp_rng =
                ChaCha12Rng::seed_from_u64(child_seed(base, &cfg.family, n, trial, "ptp"));
            lambda2_expected_ptp(s, 10_000, &mut ptp_rng).clamp(0.0, 1.0 - 1e-12)
        }
    };
    let gap = 1.0 - sigma2;

    let fstar = reference_optimum(obj.as_ref(), 1e-4, cfg.ref_iters)?;
    let r = proximal_radius(obj.setup());
    let l = obj.lipschitz();

    let mut row = SweepRow {
        family: cfg.family.clone(),
        n,
        k: cfg.k,
        algo: cfg.algo.clone(),
        protocol: cfg.protocol.clone(),
        trial,
        seed: run_seed,
        sigma2,
        gap,
        epsilon: cfg.epsilon,
        t_eps: cfg.t_max,
        hit_cap: true,
        final_error: f64::INFINITY,
    };

    match cfg.algo.as_str() {
        "dda" | "dda-stochgrad" | "dda-composite" => {
            let (noise, reg, l_sched) = match cfg.algo.as_str() {
                "dda-stochgrad" => {
                    let kind = match cfg.noise_kind.as_str() {
                        "uniform" => NoiseKind::AdditiveUniform { scale: cfg.noise_scale },
                        "signflip" => NoiseKind::SignFlip,
                        other => {
                            return Err(HarnessError::Config(format!(
                                "unknown noise_kind: {other}"
                            )));
                        }
                    };
                    let oracle = wrap_noisy(obj.as_ref(), kind);
                    (Some(oracle), Regularizer::None, oracle.l_noisy)
                }
                "dda-composite" => (None, Regularizer::L1 { weight: cfg.l1_weight }, l),
                _ => (None, Regularizer::None, l),
            };
            let schedule = StepSchedule::sqrt_decay(r, l_sched, gap)?;
            let run_cfg = RunConfig {
                t_max: cfg.t_max,
                eval_every: cfg.eval_every,
                stop_at_error: Some(cfg.epsilon),
                fstar,
                psi_xstar: r * r,
            };
            let comm = match &spec {
                Some(s) => Communication::Random(s),
                None => Communication::Static(&chain),
            };
            let record = run_distributed(
                obj.as_ref(),
                comm,
                &schedule,
                &run_cfg,
                noise.as_ref(),
                reg,
                &mut rng,
            )?;
            row.t_eps = record.t_eps.unwrap_or(cfg.t_max);
            row.hit_cap = record.t_eps.is_none();
            row.final_error = record.final_error;
            Ok((row, Some(record)))
        }
        "migd" => {
            let rec = run_migd(
                obj.as_ref(),
                &chain,
                r,
                cfg.t_max,
                cfg.eval_every,
                fstar,
                Some(cfg.epsilon),
                &mut rng,
            )?;
            row.t_eps = rec.t_eps.unwrap_or(cfg.t_max);
            row.hit_cap = rec.t_eps.is_none();
            row.final_error = rec.final_error;
            Ok((row, None))
        }
        "dpg" => {
            let rec = run_dpg(
                obj.as_ref(),
                &chain,
                r,
                cfg.t_max,
                cfg.eval_every,
                fstar,
                Some(cfg.epsilon),
            );
            row.t_eps = rec.t_eps.unwrap_or(cfg.t_max);
            row.hit_cap = rec.t_eps.is_none();
            row.final_error = rec.final_error;
            Ok((row, None))
        }
        other => Err(HarnessError::Config(format!("unknown algo: {other}"))),
    }
}

/// Least-squares fit y = a + b x; returns (slope, standard error of the
/// slope). Needs at least 3 points for a finite standard error.
pub fn fit_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let dof = (m - 2.0).max(1.0);
    let se = (ss_res / dof / sxx).sqrt();
    (slope, se)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// (n, mean T over uncapped trials) per size.
    pub means: Vec<(usize, f64)>,
    /// Log-log slope of mean T vs n with its standard error.
    pub slope: f64,
    pub slope_stderr: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Runs measure_t_epsilon over (n, trial) pairs, averages iteration
/// counts per size, and fits the log-log scaling slope. Sizes where all
/// trials hit the cap are excluded; more than half capped overall is an
/// error.
pub fn scaling_sweep(cfg: &ExperimentConfig, n_list: &[usize]) -> Result<SweepResult, HarnessError> {
    let mut rows = Vec::new();
    for &n in n_list {
        for trial in 0..cfg.trials {
            let (row, _) = measure_t_epsilon(cfg, n, trial)?;
            rows.push(row);
        }
    }
    let capped = rows.iter().filter(|r| r.hit_cap).count();
    if capped * 2 > rows.len() {
        return Err(HarnessError::Sweep(format!(
            "{capped} of {} runs hit the iteration cap",
            rows.len()
        )));
    }
    let mut means = Vec::new();
    for &n in n_list {
        let ts: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n && !r.hit_cap)
            .map(|r| r.t_eps as f64)
            .collect();
        if !ts.is_empty() {
            means.push((n, ts.iter().sum::<f64>() / ts.len() as f64));
        }
    }
    if means.len() < 2 {
        return Err(HarnessError::Sweep("fewer than two usable sizes".into()));
    }
    let pts: Vec<(f64, f64)> = means
        .iter()
        .map(|&(n, t)| ((n as f64).ln(), t.ln()))
        .collect();
    let (slope, slope_stderr) = fit_slope(&pts);
    Ok(SweepResult {
        rows,
        means,
        slope,
        slope_stderr,
    })
}

/// One size of the lower-bound demonstration.
#[derive(Debug, Clone)]
pub struct LowerBoundRow {
    pub n: usize,
    pub sigma2: f64,
    /// Simulated first round with a positive dual at the slow node.
    pub t_star: usize,
    /// Closed-form prediction.
    pub t_star_predicted: usize,
}

/// Simulates the worst-case linear instance on lazy cycle chains and
/// compares the first positive round of the slow node's dual coordinate
/// against the closed form; also fits t* against 1/(1 - sigma2).
pub fn lower_bound_demo(
    n_list: &[usize],
    c: f64,
    cap: usize,
) -> Result<(Vec<LowerBoundRow>, f64), HarnessError> {
    let mut out = Vec::new();
    for &n in n_list {
        let chain = lazy(&max_degree_chain(&build_cycle(n, 1)?));
        let inst = make_hard_instance(&chain, c)?;
        let schedule = StepSchedule::sqrt_decay(1.0, inst.lipschitz(), chain.gap())?;
        let mut state = NetworkState::new(n, inst.setup().clone());
        let mut t_star = cap;
        for s in 1..=cap {
            let grads: Vec<DVector<f64>> = (0..n)
                .map(|i| inst.node_subgradient(i, &state.x[i]))
                .collect();
            state.step(chain.entries(), &grads, &schedule)?;
            if state.z[inst.i_star][0] > 0.0 {
                t_star = s;
                break;
            }
        }
        let predicted = inst.predicted_first_positive(cap).unwrap_or(cap);
        out.push(LowerBoundRow {
            n,
            sigma2: chain.sigma2(),
            t_star,
            t_star_predicted: predicted,
        });
    }
    let pts: Vec<(f64, f64)> = out
        .iter()
        .map(|r| (1.0 / (1.0 - r.sigma2), r.t_star as f64))
        .collect();
    let (slope, _) = fit_slope(&pts);
    Ok((out, slope))
}

/// One named check of the audit battery.
#[derive(Debug, Clone)]
pub struct AuditItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub items: Vec<AuditItem>,
}

impl AuditReport {
    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.items.push(AuditItem {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&format!(
                "[{}] {} — {}\n",
                if item.pass { "PASS" } else { "FAIL" },
                item.name,
                item.detail
            ));
        }
        out.push_str(&format!(
            "{}/{} checks passed\n",
            self.items.iter().filter(|i| i.pass).count(),
            self.items.len()
        ));
        out
    }
}

/// A small battery of static chains used by several audits.
fn audit_chains() -> Result<Vec<(String, MixingMatrix)>, HarnessError> {
    Ok(vec![
        ("cycle8".into(), max_degree_chain(&build_cycle(8, 1)?)),
        ("cycle12-k2".into(), max_degree_chain(&build_cycle(12, 2)?)),
        ("path7".into(), max_degree_chain(&build_path(7, 1)?)),
        ("grid3x3".into(), max_degree_chain(&build_grid(3, 1, false)?)),
        ("torus4x4".into(), max_degree_chain(&build_grid(4, 1, true)?)),
        ("expander16".into(), max_degree_chain(&build_random_regular(16, 5, 77)?)),
    ])
}

/// The master-bound audit over randomized configurations; returns
/// (configs checked, violations, worst slack = min over evaluations of
/// rhs - error).
pub fn master_bound_audit(base_seed: u64) -> Result<(usize, usize, f64), HarnessError> {
    let mut configs = 0usize;
    let mut violations = 0usize;
    let mut worst_slack = f64::INFINITY;
    let families: [(&str, fn() -> Result<Graph, GraphError>); 5] = [
        ("cycle8", || build_cycle(8, 1)),
        ("cycle12", || build_cycle(12, 1)),
        ("path6", || build_path(6, 1)),
        ("grid3x3", || build_grid(3, 1, false)),
        ("expander16", || build_random_regular(16, 5, 7)),
    ];
    for (fi, (fname, builder)) in families.iter().enumerate() {
        for obj_kind in 0..2 {
            for sched_kind in 0..2 {
                let graph = builder()?;
                let n = graph.n();
                let chain = max_degree_chain(&graph);
                let seed = child_seed(base_seed, fname, n, obj_kind * 2 + sched_kind + fi, "t1");
                let obj: Box<dyn Objective> = if obj_kind == 0 {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let setup = median_default_setup(&values);
                    Box::new(make_median_instance(values, setup))
                } else {
                    Box::new(make_svm_instance(n, 5, 0.05, seed, svm_default_setup(5))?)
                };
                let r = proximal_radius(obj.setup());
                let l = obj.lipschitz();
                let schedule = if sched_kind == 0 {
                    StepSchedule::sqrt_decay(r, l, chain.gap())?
                } else {
                    let base = StepSchedule::sqrt_decay(r, l, chain.gap())?;
                    StepSchedule::constant(base.alpha(1), r, l)?
                };
                let fstar = reference_optimum(obj.as_ref(), 1e-4, 100_000)?;
                let run_cfg = RunConfig {
                    t_max: 300,
                    eval_every: 10,
                    stop_at_error: None,
                    fstar,
                    psi_xstar: r * r,
                };
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5555);
                let record = run_distributed(
                    obj.as_ref(),
                    Communication::Static(&chain),
                    &schedule,
                    &run_cfg,
                    None,
                    Regularizer::None,
                    &mut rng,
                )?;
                configs += 1;
                for (err, rhs) in record.max_errors.iter().zip(record.master_bound_rhs.iter()) {
                    let slack = rhs - err;
                    worst_slack = worst_slack.min(slack);
                    if *err > rhs + 1e-9 {
                        violations += 1;
                        break;
                    }
                }
            }
        }
    }
    Ok((configs, violations, worst_slack))
}

/// The full invariant battery behind the `audit` subcommand.
pub fn audit_suite(seed: u64) -> Result<AuditReport, HarnessError> {
    let mut report = AuditReport::default();

    // Double stochasticity and sigma2 range on every battery chain,
    // including lazified and sampled-protocol variants.
    {
        let mut ok = true;
        let mut detail = String::new();
        for (name, chain) in audit_chains()? {
            if !(0.0..=1.0).contains(&chain.sigma2()) {
                ok = false;
                detail = format!("{name}: sigma2 {}", chain.sigma2());
            }
            let _ = lazy(&chain); // construction re-checks stochasticity
        }
        report.push(
            "doubly-stochastic chain battery",
            ok,
            if ok { "all chains verified".into() } else { detail },
        );
    }

    // Total-variation mixing bound on static chains, t <= 100.
    {
        let mut worst = f64::NEG_INFINITY;
        let mut ok = true;
        for (_, chain) in audit_chains()? {
            let n = chain.n();
            let mut product = MatrixChain::identity(n);
            for t in 1..=100 {
                product.extend(&chain)?;
                let bound = 0.5 * (n as f64).sqrt() * chain.sigma2().powi(t);
                for j in 0..n {
                    let tv = tv_to_uniform(&product.column(j))
                        .map_err(HarnessError::Mixing)?;
                    worst = worst.max(tv - bound);
                    if tv > bound + 1e-9 {
                        ok = false;
                    }
                }
            }
        }
        report.push(
            "total-variation mixing bound",
            ok,
            format!("worst excess over bound {worst:.3e}"),
        );
    }

    // Projection contraction on 10^4 random pairs per setup.
    {
        let setups = [
            ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 5 }),
            ProximalSetup::quadratic(ConstraintSet::EuclideanBall { dim: 5, radius: 5.0 }),
            ProximalSetup::quadratic(ConstraintSet::Box {
                lo: vec![-1.0; 5],
                hi: vec![1.0; 5],
            }),
            ProximalSetup::quadratic(ConstraintSet::Simplex { dim: 5 }),
            ProximalSetup::entropic(5),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabc);
        let mut ok = true;
        let mut worst = 0.0f64;
        for setup in &setups {
            for _ in 0..10_000 {
                let u = DVector::from_fn(5, |_, _| rng.random_range(-5.0..5.0));
                let v = DVector::from_fn(5, |_, _| rng.random_range(-5.0..5.0));
                let alpha = rng.random_range(0.01..3.0);
                let (pass, ratio) = lipschitz_audit(setup, alpha, &u, &v)
                    .map_err(crate::dda::DdaError::from)?;
                if ratio.is_finite() {
                    worst = worst.max(ratio);
                }
                ok &= pass;
            }
        }
        report.push(
            "projection contraction",
            ok,
            format!("max ratio {worst:.9} (limit 1 + 1e-8)"),
        );
    }

    // Master bound on randomized configurations.
    {
        let (configs, violations, slack) = master_bound_audit(seed)?;
        report.push(
            "master error bound",
            violations == 0,
            format!("{configs} configs, {violations} violations, min slack {slack:.3e}"),
        );
    }

    // Static deviation bound over simulated runs on the chain battery.
    {
        let mut ok = true;
        let mut detail = String::from("all runs below bound");
        for (name, chain) in audit_chains()? {
            let n = chain.n();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x77);
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let obj = make_median_instance(values.clone(), median_default_setup(&values));
            let r = proximal_radius(obj.setup());
            let schedule = StepSchedule::sqrt_decay(r, 1.0, chain.gap())?;
            let t_max = 1000;
            let cfg = RunConfig {
                t_max,
                eval_every: 100,
                stop_at_error: None,
                fstar: 0.0,
                psi_xstar: r * r,
            };
            let record = run_distributed(
                &obj,
                Communication::Static(&chain),
                &schedule,
                &cfg,
                None,
                Regularizer::None,
                &mut rng,
            )?;
            let bound = deviation_bound_static(t_max, n, chain.sigma2(), 1.0)?;
            if record.max_deviation > bound {
                ok = false;
                detail = format!("{name}: deviation {} > bound {bound}", record.max_deviation);
            }
        }
        report.push("static dual-deviation bound", ok, detail);
    }

    // Gossip expectation closed form vs Monte-Carlo, and the projection
    // identity of sampled gossip matrices.
    {
        let mut ok = true;
        let mut worst = 0.0f64;
        for g in [build_cycle(3, 1)?, build_cycle(8, 1)?] {
            let n = g.n();
            let spec = ProtocolSpec::new(ProtocolKind::Gossip, g, 0.0)?;
            let expected = expected_protocol_matrix(&spec);
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x31);
            let mut acc = nalgebra::DMatrix::<f64>::zeros(n, n);
            let samples = 100_000;
            for _ in 0..samples {
                let p = sample_protocol_matrix(&spec, &mut rng);
                let m = p.entries();
                if &(m.transpose() * m) != m {
                    ok = false;
                }
                acc += m;
            }
            acc /= samples as f64;
            let err = (&acc - expected.entries()).abs().max();
            worst = worst.max(err);
            ok &= err <= 1e-2;
        }
        report.push(
            "gossip expectation and projection identity",
            ok,
            format!("max entrywise Monte-Carlo error {worst:.2e}"),
        );
    }

    // Linear-regret inequality for the centralized recursion on random
    // gradient streams and comparison points.
    {
        let setup = ProximalSetup::quadratic(ConstraintSet::EuclideanBall { dim: 3, radius: 2.0 });
        let schedule = StepSchedule::sqrt_decay(2.0f64.sqrt(), 1.0, 1.0)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9);
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for _ in 0..10 {
            let mut xstar = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if xstar.norm() > 2.0 {
                let n = xstar.norm();
                xstar *= 2.0 / n;
            }
            let mut state = crate::dda::CentralizedState::new(setup.clone());
            let mut lhs = 0.0;
            let mut quad = 0.0;
            for t in 1..=100 {
                let mut g = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                if g.norm() > 1.0 {
                    let n = g.norm();
                    g /= n;
                }
                lhs += g.dot(&(&state.x - &xstar));
                quad += 0.5 * schedule.alpha(t - 1) * g.norm_squared();
                state.step(&g, &schedule)?;
            }
            let rhs = setup.psi(&xstar) / schedule.alpha(100) + quad;
            worst = worst.min(rhs - lhs);
            ok &= lhs <= rhs + 1e-9;
        }
        report.push(
            "linear-regret inequality",
            ok,
            format!("min slack {worst:.3e}"),
        );
    }

    // Cheeger sandwich on all battery graphs with n <= 14.
    {
        let graphs = vec![
            build_cycle(8, 1)?,
            build_cycle(12, 2)?,
            build_path(7, 1)?,
            build_path(14, 3)?,
            build_grid(3, 1, false)?,
            build_random_regular(10, 3, 5)?,
        ];
        let mut ok = true;
        let mut detail = String::from("2h >= lambda > h^2/2 on all graphs");
        for g in graphs {
            let h = cheeger_constant_exact(&g)?;
            let lam = normalized_laplacian(&g).lambda_second_smallest();
            if !(2.0 * h >= lam && lam > h * h / 2.0) {
                ok = false;
                detail = format!("n={}: h={h}, lambda={lam}", g.n());
            }
        }
        report.push("cheeger sandwich", ok, detail);
    }

    // Token-walk rate-constant inequality on the chain battery.
    {
        let mut ok = true;
        let mut min_ratio = f64::INFINITY;
        for (_, chain) in audit_chains()? {
            let rc = migd_rate_constant(&chain)?;
            let ratio = rc * chain.gap();
            min_ratio = min_ratio.min(ratio);
            ok &= rc >= 1.0 / chain.gap() - 1e-9;
        }
        report.push(
            "token-walk rate constant",
            ok,
            format!("min (n max Gamma_ii)(1 - sigma2) = {min_ratio:.6}"),
        );
    }

    Ok(report)
}

/// Human-readable spectral summary of the configured graph.
pub fn spectral_report(cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let g = build_graph(cfg, cfg.n, 0)?;
    let lap = normalized_laplacian(&g);
    let chain = max_degree_chain(&g);
    let lazy_chain = lazy(&chain);
    let mut out = String::new();
    out.push_str(&format!(
        "family={} n={} edges={} degree_min={} degree_max={}\n",
        cfg.family,
        g.n(),
        g.num_edges(),
        g.min_degree(),
        g.max_degree()
    ));
    out.push_str(&format!(
        "laplacian: lambda_max={} lambda_second_smallest={}\n",
        lap.lambda_max(),
        lap.lambda_second_smallest()
    ));
    out.push_str(&format!(
        "chain: sigma2={} gap={}\nlazy chain: sigma2={} gap={}\n",
        chain.sigma2(),
        chain.gap(),
        lazy_chain.sigma2(),
        lazy_chain.gap()
    ));
    out.push_str(&format!(
        "token-walk rate constant n*max(Gamma_ii)={}\n",
        migd_rate_constant(&chain)?
    ));
    if g.n() <= 20 {
        out.push_str(&format!("cheeger constant={}\n", cheeger_constant_exact(&g)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_roundtrip_and_unknown_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.family = "grid".into();
        cfg.n = 36;
        cfg.epsilon = 0.2;
        let text = cfg.to_text();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert!(ExperimentConfig::parse("bogus_key=1\n").is_err());
        assert!(ExperimentConfig::parse("n=notanumber\n").is_err());
        // Comments and blanks are fine.
        let ok = ExperimentConfig::parse("# comment\n\nn=16 # trailing\n").unwrap();
        assert_eq!(ok.n, 16);
    }

    #[test]
    fn seed_splitting_is_stable_and_disjoint() {
        let a = child_seed(1, "cycle", 8, 0, "run");
        assert_eq!(a, child_seed(1, "cycle", 8, 0, "run"));
        assert_ne!(a, child_seed(1, "cycle", 8, 1, "run"));
        assert_ne!(a, child_seed(1, "cycle", 8, 0, "objective"));
        assert_ne!(a, child_seed(2, "cycle", 8, 0, "run"));
        assert_ne!(a, child_seed(1, "grid", 8, 0, "run"));
    }

    #[test]
    fn slope_fit_recovers_known_line() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|i| (i as f64, 3.0 + 2.0 * i as f64))
            .collect();
        let (slope, se) = fit_slope(&pts);
        assert_abs_diff_eq!(slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(se, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn measure_t_epsilon_trivial_and_deterministic() {
        let mut cfg = ExperimentConfig::default();
        cfg.objective = "median".into();
        cfg.family = "cycle".into();
        cfg.t_max = 2000;
        cfg.ref_iters = 50_000;
        // A huge target is met at the first evaluation.
        cfg.epsilon = 100.0;
        let (row, _) = measure_t_epsilon(&cfg, 8, 0).unwrap();
        assert_eq!(row.t_eps, cfg.eval_every);
        assert!(!row.hit_cap);
        // Identical config and trial: identical row.
        cfg.epsilon = 0.2;
        let (a, _) = measure_t_epsilon(&cfg, 8, 0).unwrap();
        let (b, _) = measure_t_epsilon(&cfg, 8, 0).unwrap();
        assert_eq!(a.t_eps, b.t_eps);
        assert_eq!(a.final_error, b.final_error);
        assert_eq!(a.csv_line(), b.csv_line());
    }

    #[test]
    fn sweep_csv_shape() {
        let mut cfg = ExperimentConfig::default();
        cfg.objective = "median".into();
        cfg.trials = 2;
        cfg.epsilon = 0.3;
        cfg.t_max = 5000;
        cfg.ref_iters = 50_000;
        let result = scaling_sweep(&cfg, &[4, 8]).unwrap();
        assert_eq!(result.rows.len(), 4);
        let csv = result.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 4);
        // Byte-identical reruns.
        let again = scaling_sweep(&cfg, &[4, 8]).unwrap();
        assert_eq!(csv, again.to_csv());
    }

    #[test]
    fn lower_bound_closed_form_anchor() {
        // Complete-graph-like chain: the 3-cycle's NON-lazy chain has
        // sigma2 = 0 and the c = 1/3 instance first turns positive at
        // round 4. The demo itself uses lazy cycles; check its rows are
        // within one round of prediction.
        let (rows, slope) = lower_bound_demo(&[8, 16], 1.0 / 3.0, 20_000).unwrap();
        for r in &rows {
            assert!(
                (r.t_star as i64 - r.t_star_predicted as i64).abs() <= 1,
                "n={}: simulated {} vs predicted {}",
                r.n,
                r.t_star,
                r.t_star_predicted
            );
        }
        assert!(slope > 0.0);
    }

    #[test]
    fn audit_negative_control() {
        // A non-stochastic matrix must be rejected by construction —
        // the battery's stochasticity gate cannot be fooled.
        let bad = nalgebra::DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        assert!(MixingMatrix::new(bad).is_err());
    }

    #[test]
    fn spectral_report_contents() {
        let mut cfg = ExperimentConfig::default();
        cfg.family = "cycle".into();
        cfg.n = 8;
        let report = spectral_report(&cfg).unwrap();
        assert!(report.contains("family=cycle n=8"));
        assert!(report.contains("cheeger constant="));
    }
}
