//! Riemannian block-coordinate descent for the kernel projected Wasserstein
//! distance.
//!
//! After the representer reduction the problem is
//!
//! ```text
//!   max_{s on sphere}  min_{plan in transport polytope}  sum_ij pi_ij c_ij(s)
//! ```
//!
//! with c_ij(s) the smoothed norm of the difference of projected points.
//! Entropic regularization turns the inner problem into the dual objective
//!
//! ```text
//!   F(u, v, s) = sum_ij pi_ij(u, v, s) - mean(u) - mean(v),
//!   pi_ij = exp(-c_ij / eta + u_i + v_j),
//! ```
//!
//! minimized jointly in (u, v, s). One iteration updates u and v in closed
//! form (each makes its marginal exact), then takes a projected gradient step
//! in s followed by the normalization retraction. All plan manipulations run
//! in log domain so small eta does not underflow.

use ndarray::{Array1, Array2, Axis};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::kernel::{gram_bundle, GramBundle, KernelParams, SampleSet};
use crate::linalg;
use crate::manifold::{retract, tangent_project, SpherePoint};
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result};

/// Exponents above this abort the solve as divergent.
const MAX_EXPONENT: f64 = 700.0;
/// First-trial step length on the sphere for the backtracking rule.
const TARGET_STEP_NORM: f64 = 0.25;
/// Hard ceiling on halvings before falling back to the safe step.
const MAX_BACKTRACKS: usize = 80;

const INIT_TAG: u64 = 0x5348_4552; // sphere init stream
const RESTART_TAG: u64 = 0x5253_5254;

/// Step-size rule for the sphere update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Backtracking from a normalized trial step, falling back to the
    /// provably safe step whenever the objective refuses to decrease.
    Auto,
    /// The conservative closed-form step from the convergence analysis.
    /// Tiny but guarantees monotone descent without any probing.
    Theoretical,
    /// A caller-supplied constant step.
    Fixed(f64),
}

impl Serialize for StepRule {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepRule::Auto => ser.serialize_str("auto"),
            StepRule::Theoretical => ser.serialize_str("theoretical"),
            StepRule::Fixed(t) => ser.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for StepRule {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        match v {
            serde_json::Value::String(s) if s == "auto" => Ok(StepRule::Auto),
            serde_json::Value::String(s) if s == "theoretical" => Ok(StepRule::Theoretical),
            serde_json::Value::Number(x) => x
                .as_f64()
                .map(StepRule::Fixed)
                .ok_or_else(|| D::Error::custom("tau must be a float")),
            other => Err(D::Error::custom(format!(
                "tau must be \"auto\", \"theoretical\", or a positive number, got {other}"
            ))),
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Entropic regularization weight.
    pub eta: f64,
    /// Norm smoothing parameter.
    pub kappa: f64,
    /// Retraction step rule.
    pub tau: StepRule,
    /// Riemannian gradient tolerance (the test is ||xi|| <= eps1 / eta).
    pub eps1: f64,
    /// Dual suboptimality tolerance.
    pub eps2: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Seed for the sphere initialization.
    pub seed: u64,
    /// Independent restarts; the largest statistic wins.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: 1e-2,
            kappa: 1e-2,
            tau: StepRule::Auto,
            eps1: 1e-2,
            eps2: 1e-2,
            max_iters: 500,
            seed: 0,
            restarts: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, val) in [
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
        ] {
            if !(val > 0.0) || !val.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {val}"
                )));
            }
        }
        if let StepRule::Fixed(t) = self.tau {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "fixed tau must be positive, got {t}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Iteration snapshot handed to observers and kept as diagnostics.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub s: SpherePoint,
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub row_residual: f64,
    pub col_residual: f64,
    /// Running max of ||u||_inf over iterates, floored at 1.
    pub u_sup: f64,
    /// Running max of ||v||_inf over iterates, floored at 1.
    pub v_sup: f64,
}

/// Moment within one BCD iteration at which an observer is called.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    IterStart,
    AfterU,
    AfterV,
    AfterStep,
}

/// Callback invoked by [`bcd_solve_observed`] at every [`Phase`].
pub type Observer<'a> = &'a mut dyn FnMut(Phase, &SolverState);

/// Outcome of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct KpwResult {
    /// Transport cost sum_ij pi_ij ||f(x_i) - f(y_j)||_2 at the returned
    /// plan and sphere point. Exact norms, no entropy term.
    pub statistic: f64,
    /// Final dual objective F(u, v, s).
    pub regularized_objective: f64,
    /// Whether the stationarity conditions were met before the cap.
    pub converged: bool,
    /// BCD iterations performed.
    pub iters: usize,
    /// Per-iteration (objective, Riemannian gradient norm).
    pub trace: Vec<(f64, f64)>,
    /// Representer coefficients omega = U s.
    #[serde(skip)]
    pub omega: Array1<f64>,
    /// Projected x sample, n rows of dimension d.
    #[serde(skip)]
    pub projected_x: Array2<f64>,
    /// Projected y sample, m rows of dimension d.
    #[serde(skip)]
    pub projected_y: Array2<f64>,
    /// Transport plan, n x m.
    #[serde(skip)]
    pub plan: Array2<f64>,
    /// Final sphere point.
    #[serde(skip)]
    pub sphere_point: Option<SpherePoint>,
    /// Final dual potentials.
    #[serde(skip)]
    pub potentials: Option<(Array1<f64>, Array1<f64>)>,
    /// Running sup of ||u||_inf over iterates, floored at 1 (termination constant).
    #[serde(skip)]
    pub u_sup: f64,
    /// Running sup of ||v||_inf over iterates, floored at 1.
    #[serde(skip)]
    pub v_sup: f64,
}

/// Projected points and cost matrices for one sphere point.
struct Projection {
    fx: Array2<f64>,
    fy: Array2<f64>,
    /// Smoothed costs sqrt(||fx_i - fy_j||^2 + kappa^2) - kappa.
    cost: Array2<f64>,
    /// sqrt(||fx_i - fy_j||^2 + kappa^2) = cost + kappa (gradient denominator).
    sqrt_shift: Array2<f64>,
    /// Exact norms ||fx_i - fy_j||.
    cost_exact: Array2<f64>,
}

impl Projection {
    fn compute(s: &SpherePoint, bundle: &GramBundle, kappa: f64) -> Projection {
        let (n, m) = (bundle.n(), bundle.m());
        let omega = bundle.coefficient_blocks(s);
        let f = bundle.evaluate_blocks(&omega);
        let fx = f.slice(ndarray::s![..n, ..]).to_owned();
        let fy = f.slice(ndarray::s![n.., ..]).to_owned();

        let sqx: Vec<f64> = (0..n).map(|i| fx.row(i).dot(&fx.row(i))).collect();
        let sqy: Vec<f64> = (0..m).map(|j| fy.row(j).dot(&fy.row(j))).collect();
        let cross = fx.dot(&fy.t());
        let kap2 = kappa * kappa;
        let mut cost = Array2::zeros((n, m));
        let mut sqrt_shift = Array2::zeros((n, m));
        let mut cost_exact = Array2::zeros((n, m));
        {
            let cd = cost.as_slice_mut().expect("contiguous");
            let sd = sqrt_shift.as_slice_mut().expect("contiguous");
            let ed = cost_exact.as_slice_mut().expect("contiguous");
            let xd = cross.as_slice().expect("contiguous");
            for (i, &sxi) in sqx.iter().enumerate() {
                let off = i * m;
                for j in 0..m {
                    let sq = (sxi + sqy[j] - 2.0 * xd[off + j]).max(0.0);
                    let shifted = (sq + kap2).sqrt();
                    ed[off + j] = sq.sqrt();
                    sd[off + j] = shifted;
                    cd[off + j] = (shifted - kappa).max(0.0);
                }
            }
        }
        Projection {
            fx,
            fy,
            cost,
            sqrt_shift,
            cost_exact,
        }
    }
}

/// Push-forward of both samples under the representer defined by `s`:
/// (n x d, m x d) matrices of projected points.
pub fn projected_points(s: &SpherePoint, bundle: &GramBundle) -> (Array2<f64>, Array2<f64>) {
    let proj = Projection::compute(s, bundle, 1e-2);
    (proj.fx, proj.fy)
}

/// Smoothed cost matrix c_ij = || f(x_i) - f(y_j) ||_{2,kappa}, assembled
/// from the projected points without materializing any per-pair operator.
pub fn cost_matrix(s: &SpherePoint, bundle: &GramBundle, kappa: f64) -> Array2<f64> {
    Projection::compute(s, bundle, kappa).cost
}

/// Log-domain plan: log pi_ij = -c_ij / eta + u_i + v_j.
pub fn log_plan(cost: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>, eta: f64) -> Array2<f64> {
    let (n, m) = cost.dim();
    let mut lp = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            lp[[i, j]] = -cost[[i, j]] / eta + u[i] + v[j];
        }
    }
    lp
}

/// Materialized plan with an overflow guard on the exponents.
pub fn plan_matrix(
    cost: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    eta: f64,
) -> Result<Array2<f64>> {
    let lp = log_plan(cost, u, v, eta);
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > MAX_EXPONENT {
        return Err(Error::PotentialsDiverged { max_exponent: max });
    }
    Ok(lp.mapv(f64::exp))
}

/// Dual objective F(u, v, s) = sum pi - mean(u) - mean(v) for a fixed cost
/// matrix (the s dependence enters through `cost`).
pub fn objective(cost: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>, eta: f64) -> f64 {
    let lp = log_plan(cost, u, v, eta);
    let total: f64 = lp.iter().map(|&x| x.exp()).sum();
    total - u.mean().unwrap_or(0.0) - v.mean().unwrap_or(0.0)
}

/// Closed-form u update: afterwards every row of the plan sums to exactly
/// 1/n. Returns an error if a row log-sum-exp is not finite.
pub fn update_u(cost: &Array2<f64>, u: &mut Array1<f64>, v: &Array1<f64>, eta: f64) -> Result<()> {
    let lp = log_plan(cost, u, v, eta);
    let n = lp.nrows();
    let log_target = -(n as f64).ln();
    for i in 0..n {
        let lse = linalg::logsumexp(lp.row(i).as_slice().expect("contiguous row"));
        if !lse.is_finite() {
            return Err(Error::VanishedMarginal { row: i });
        }
        u[i] += log_target - lse;
    }
    Ok(())
}

/// Closed-form v update: afterwards every column of the plan sums to exactly
/// 1/m. Mirror of [`update_u`].
pub fn update_v(cost: &Array2<f64>, u: &Array1<f64>, v: &mut Array1<f64>, eta: f64) -> Result<()> {
    let lp = log_plan(cost, u, v, eta);
    let m = lp.ncols();
    let log_target = -(m as f64).ln();
    let mut col_lse = Array1::zeros(m);
    linalg::logsumexp_columns(&lp, &mut col_lse);
    for j in 0..m {
        if !col_lse[j].is_finite() {
            return Err(Error::VanishedMarginal { row: j });
        }
        v[j] += log_target - col_lse[j];
    }
    Ok(())
}

fn marginal_residuals(pi: &Array2<f64>) -> (f64, f64) {
    let (n, m) = pi.dim();
    let rows = pi.sum_axis(Axis(1));
    let cols = pi.sum_axis(Axis(0));
    let row_res = rows
        .iter()
        .map(|&r| (1.0 / n as f64 - r).powi(2))
        .sum::<f64>()
        .sqrt();
    let col_res = cols.iter().map(|&c| (1.0 / m as f64 - c).abs()).sum();
    (row_res, col_res)
}

/// Gradient of F with respect to s, assembled through the tensor structure.
///
/// Equals the pair sum of pi_ij times the gradient of the smoothed cost,
/// divided by eta and negated, without forming any per-pair operator.
fn gradient_from_plan(
    proj: &Projection,
    pi: &Array2<f64>,
    bundle: &GramBundle,
    eta: f64,
) -> Array1<f64> {
    let (n, m, d) = (bundle.n(), bundle.m(), bundle.d());
    let mut w = pi / &proj.sqrt_shift;
    w /= eta;
    let rw = w.sum_axis(Axis(1));
    let cw = w.sum_axis(Axis(0));
    // T_x[i] = sum_j W_ij (fx_i - fy_j);  T_y[j] = sum_i W_ij (fx_i - fy_j)
    let mut stacked = Array2::zeros((n + m, d));
    {
        let wfy = w.dot(&proj.fy);
        for i in 0..n {
            for c in 0..d {
                stacked[[i, c]] = rw[i] * proj.fx[[i, c]] - wfy[[i, c]];
            }
        }
        let wtfx = w.t().dot(&proj.fx);
        for j in 0..m {
            for c in 0..d {
                // rows n.. carry -T_y so one Gram product covers both halves
                stacked[[n + j, c]] = -(wtfx[[j, c]] - cw[j] * proj.fy[[j, c]]);
            }
        }
    }
    let r = bundle.scalar_gram().dot(&stacked);
    let z = bundle.gradient_pullback(&r);
    let mut zeta = z.into_shape_with_order(d * (n + m)).expect("reshape");
    zeta.mapv_inplace(|x| -x);
    zeta
}

/// Euclidean gradient of F in s at the given dual potentials.
pub fn euclidean_gradient(
    u: &Array1<f64>,
    v: &Array1<f64>,
    s: &SpherePoint,
    bundle: &GramBundle,
    config: &SolverConfig,
) -> Result<Array1<f64>> {
    let proj = Projection::compute(s, bundle, config.kappa);
    let pi = plan_matrix(&proj.cost, u, v, config.eta)?;
    Ok(gradient_from_plan(&proj, &pi, bundle, config.eta))
}

/// Conservative step size from the descent analysis, evaluated with
/// retraction constants L1 = L2 = 1 and the uniform bound
/// max_ij ||A_ij U||_2 <= 2 sqrt(B).
pub fn default_step_size(bundle: &GramBundle, config: &SolverConfig) -> f64 {
    let au_sq = 4.0 * bundle.bound(); // (2 sqrt B)^2
    let ke = config.kappa * config.eta;
    let mn = (bundle.n() * bundle.m()) as f64;
    let rho = au_sq / ke + mn * au_sq * au_sq / (ke * ke);
    1.0 / (2.0 * au_sq / ke + rho)
}

struct IterationOutput {
    converged: bool,
    u: Array1<f64>,
    v: Array1<f64>,
    s: SpherePoint,
    iters: usize,
    trace: Vec<(f64, f64)>,
    u_sup: f64,
    v_sup: f64,
}

#[allow(clippy::too_many_arguments)]
fn emit(
    observer: &mut Option<Observer<'_>>,
    phase: Phase,
    u: &Array1<f64>,
    v: &Array1<f64>,
    s: &SpherePoint,
    iter: usize,
    f_value: f64,
    grad_norm: f64,
    residuals: (f64, f64),
    sups: (f64, f64),
) {
    if let Some(obs) = observer.as_mut() {
        obs(
            phase,
            &SolverState {
                u: u.clone(),
                v: v.clone(),
                s: s.clone(),
                iter,
                f_value,
                grad_norm,
                row_residual: residuals.0,
                col_residual: residuals.1,
                u_sup: sups.0,
                v_sup: sups.1,
            },
        );
    }
}

/// One pass: log pi entries with the running maximum (overflow guard).
fn fill_log_plan(
    out: &mut Array2<f64>,
    cost: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    eta: f64,
) -> Result<()> {
    let (n, m) = cost.dim();
    let inv_eta = 1.0 / eta;
    let od = out.as_slice_mut().expect("contiguous");
    let cd = cost.as_slice().expect("contiguous");
    let vd = v.as_slice().expect("contiguous");
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let ui = u[i];
        let row_out = &mut od[i * m..(i + 1) * m];
        let row_cost = &cd[i * m..(i + 1) * m];
        for j in 0..m {
            let lp = -row_cost[j] * inv_eta + ui + vd[j];
            row_out[j] = lp;
            if lp > max {
                max = lp;
            }
        }
    }
    if !(max <= MAX_EXPONENT) {
        return Err(Error::PotentialsDiverged { max_exponent: max });
    }
    Ok(())
}

fn row_logsumexp(log_pi: &Array2<f64>, out: &mut Vec<f64>) {
    out.clear();
    for row in log_pi.rows() {
        out.push(linalg::logsumexp(row.as_slice().expect("contiguous")));
    }
}

fn bcd_iterations(
    bundle: &GramBundle,
    config: &SolverConfig,
    init: SpherePoint,
    observer: &mut Option<Observer<'_>>,
) -> Result<IterationOutput> {
    let (n, m) = (bundle.n(), bundle.m());
    let eta = config.eta;
    let tau_safe = default_step_size(bundle, config);
    let (inv_n, inv_m) = (1.0 / n as f64, 1.0 / m as f64);
    let (ln_inv_n, ln_inv_m) = (-(n as f64).ln(), -(m as f64).ln());

    let mut s = init;
    let mut u = Array1::zeros(n);
    let mut v = Array1::zeros(m);
    let mut u_sup = 1.0f64;
    let mut v_sup = 1.0f64;
    let mut trace = Vec::new();
    let mut proj = Projection::compute(&s, bundle, config.kappa);
    let mut log_pi = Array2::<f64>::zeros((n, m));
    let mut row_lse: Vec<f64> = Vec::with_capacity(n);
    let mut col_lse = Array1::<f64>::zeros(m);
    // warm start for the backtracking rule
    let mut tau_prev: Option<f64> = None;

    for iter in 0..config.max_iters {
        fill_log_plan(&mut log_pi, &proj.cost, &u, &v, eta)?;
        row_logsumexp(&log_pi, &mut row_lse);
        linalg::logsumexp_columns(&log_pi, &mut col_lse);
        let row_res = row_lse
            .iter()
            .map(|&l| (inv_n - l.exp()).powi(2))
            .sum::<f64>()
            .sqrt();
        let col_res: f64 = col_lse.iter().map(|&l| (inv_m - l.exp()).abs()).sum();
        let f_start = row_lse.iter().map(|&l| l.exp()).sum::<f64>()
            - u.mean().unwrap_or(0.0)
            - v.mean().unwrap_or(0.0);
        u_sup = u_sup.max(u.iter().fold(0.0f64, |a, &x| a.max(x.abs())));
        v_sup = v_sup.max(v.iter().fold(0.0f64, |a, &x| a.max(x.abs())));
        emit(
            observer,
            Phase::IterStart,
            &u,
            &v,
            &s,
            iter,
            f_start,
            f64::NAN,
            (row_res, col_res),
            (u_sup, v_sup),
        );

        // Stationarity check, all three conditions at the same iterate.
        if row_res <= config.eps2 / (4.0 * u_sup) && col_res <= config.eps2 / (4.0 * v_sup) {
            let pi = log_pi.mapv(f64::exp);
            let zeta = gradient_from_plan(&proj, &pi, bundle, eta);
            let xi = tangent_project(&s, &zeta);
            let xi_norm = xi.dot(&xi).sqrt();
            if xi_norm <= config.eps1 / eta {
                trace.push((f_start, xi_norm));
                return Ok(IterationOutput {
                    converged: true,
                    u,
                    v,
                    s,
                    iters: iter,
                    trace,
                    u_sup,
                    v_sup,
                });
            }
        }

        // closed-form u update from the row log-sums already in hand
        for i in 0..n {
            let du = ln_inv_n - row_lse[i];
            u[i] += du;
            let mut row = log_pi.row_mut(i);
            for lp in row.iter_mut() {
                *lp += du;
            }
        }
        if observer.is_some() {
            let pi_u = plan_matrix(&proj.cost, &u, &v, eta)?;
            let res = marginal_residuals(&pi_u);
            let f_u = pi_u.sum() - u.mean().unwrap_or(0.0) - v.mean().unwrap_or(0.0);
            emit(
                observer,
                Phase::AfterU,
                &u,
                &v,
                &s,
                iter,
                f_u,
                f64::NAN,
                res,
                (u_sup, v_sup),
            );
        }

        // closed-form v update
        linalg::logsumexp_columns(&log_pi, &mut col_lse);
        {
            let od = log_pi.as_slice_mut().expect("contiguous");
            for j in 0..m {
                let dv = ln_inv_m - col_lse[j];
                v[j] += dv;
                for i in 0..n {
                    od[i * m + j] += dv;
                }
            }
        }
        // log_pi now matches (u, v); materialize the plan in place
        let pi_uv = {
            let mut p = log_pi.clone();
            p.mapv_inplace(f64::exp);
            p
        };
        let f_uv = pi_uv.sum() - u.mean().unwrap_or(0.0) - v.mean().unwrap_or(0.0);
        if observer.is_some() {
            let res = marginal_residuals(&pi_uv);
            emit(
                observer,
                Phase::AfterV,
                &u,
                &v,
                &s,
                iter,
                f_uv,
                f64::NAN,
                res,
                (u_sup, v_sup),
            );
        }

        let zeta = gradient_from_plan(&proj, &pi_uv, bundle, eta);
        let xi = tangent_project(&s, &zeta);
        let xi_norm = xi.dot(&xi).sqrt();
        trace.push((f_start, xi_norm));

        let (s_next, proj_next) = match config.tau {
            StepRule::Theoretical => {
                let step = retract(&s, &(-tau_safe * &xi))?;
                let p = Projection::compute(&step, bundle, config.kappa);
                (step, p)
            }
            StepRule::Fixed(t) => {
                let step = retract(&s, &(-t * &xi))?;
                let p = Projection::compute(&step, bundle, config.kappa);
                (step, p)
            }
            StepRule::Auto => {
                // Trust-region flavored backtracking: start from twice the
                // last accepted step (capped by a fixed step norm), halve
                // while the objective refuses to decrease, and accept the
                // provably safe step unconditionally once reached.
                let cap = if xi_norm > 0.0 {
                    TARGET_STEP_NORM / xi_norm
                } else {
                    tau_safe
                };
                let mut tau = tau_prev
                    .map(|t| (2.0 * t).min(cap))
                    .unwrap_or(cap)
                    .max(tau_safe);
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let cand = retract(&s, &(-tau * &xi))?;
                    let proj_cand = Projection::compute(&cand, bundle, config.kappa);
                    let f_cand = objective(&proj_cand.cost, &u, &v, eta);
                    if f_cand <= f_uv + 1e-12 * (1.0 + f_uv.abs()) || tau <= tau_safe {
                        accepted = Some((cand, proj_cand));
                        break;
                    }
                    tau = (tau * 0.5).max(tau_safe);
                }
                tau_prev = Some(tau);
                match accepted {
                    Some(pair) => pair,
                    None => {
                        let cand = retract(&s, &(-tau_safe * &xi))?;
                        let p = Projection::compute(&cand, bundle, config.kappa);
                        (cand, p)
                    }
                }
            }
        };
        s = s_next;
        proj = proj_next;
        if observer.is_some() {
            let pi_step = plan_matrix(&proj.cost, &u, &v, eta)?;
            let res = marginal_residuals(&pi_step);
            let f_step = pi_step.sum() - u.mean().unwrap_or(0.0) - v.mean().unwrap_or(0.0);
            emit(
                observer,
                Phase::AfterStep,
                &u,
                &v,
                &s,
                iter,
                f_step,
                xi_norm,
                res,
                (u_sup, v_sup),
            );
        }
    }

    Ok(IterationOutput {
        converged: false,
        u,
        v,
        s,
        iters: config.max_iters,
        trace,
        u_sup,
        v_sup,
    })
}

fn assemble_result(
    bundle: &GramBundle,
    config: &SolverConfig,
    out: IterationOutput,
) -> Result<KpwResult> {
    let proj = Projection::compute(&out.s, bundle, config.kappa);
    let pi = plan_matrix(&proj.cost, &out.u, &out.v, config.eta)?;
    let statistic: f64 = pi
        .iter()
        .zip(proj.cost_exact.iter())
        .map(|(&p, &c)| p * c)
        .sum();
    let f_final = pi.sum() - out.u.mean().unwrap_or(0.0) - out.v.mean().unwrap_or(0.0);
    let omega_blocks = bundle.coefficient_blocks(&out.s);
    let omega = omega_blocks
        .into_shape_with_order(bundle.sphere_dim())
        .expect("reshape");
    Ok(KpwResult {
        statistic,
        regularized_objective: f_final,
        converged: out.converged,
        iters: out.iters,
        trace: out.trace,
        omega,
        projected_x: proj.fx,
        projected_y: proj.fy,
        plan: pi,
        sphere_point: Some(out.s),
        potentials: Some((out.u, out.v)),
        u_sup: out.u_sup,
        v_sup: out.v_sup,
    })
}

/// Solve the entropically regularized problem on a prepared Gram bundle.
///
/// Runs `config.restarts` independent sphere initializations (seeded from
/// `config.seed`) and keeps the largest statistic; the surface is non-convex
/// and only stationarity is guaranteed per start.
pub fn bcd_solve(bundle: &GramBundle, config: &SolverConfig) -> Result<KpwResult> {
    bcd_solve_observed(bundle, config, None)
}

/// [`bcd_solve`] with an observer invoked at fixed moments of every
/// iteration; used by the verification suite to check per-iterate
/// invariants without reimplementing the loop.
pub fn bcd_solve_observed(
    bundle: &GramBundle,
    config: &SolverConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<KpwResult> {
    config.validate()?;
    let mut best: Option<KpwResult> = None;
    for restart in 0..config.restarts {
        let seed = derive_seed(config.seed, &[RESTART_TAG, restart as u64, INIT_TAG]);
        let mut stream = Stream::new(seed);
        let init = SpherePoint::random(bundle.sphere_dim(), &mut stream);
        let out = bcd_iterations(bundle, config, init, &mut observer)?;
        let result = assemble_result(bundle, config, out)?;
        let better = match &best {
            None => true,
            Some(b) => result.statistic > b.statistic,
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Solve from an explicit initial sphere point (single start).
pub fn bcd_solve_from(
    bundle: &GramBundle,
    config: &SolverConfig,
    init: SpherePoint,
) -> Result<KpwResult> {
    config.validate()?;
    if init.dim() != bundle.sphere_dim() {
        return Err(Error::DimensionMismatch {
            left: init.dim(),
            right: bundle.sphere_dim(),
        });
    }
    let out = bcd_iterations(bundle, config, init, &mut None)?;
    assemble_result(bundle, config, out)
}

/// Full pipeline: Gram bundle construction followed by the BCD solve.
pub fn kpw_distance(
    xs: &SampleSet,
    ys: &SampleSet,
    params: &KernelParams,
    config: &SolverConfig,
) -> Result<KpwResult> {
    let bundle = gram_bundle(xs, ys, params, 0.0)?;
    bcd_solve(&bundle, config)
}

/// Result of the inner entropic solve with the sphere point held fixed.
#[derive(Debug, Clone)]
pub struct FixedSphereSolve {
    /// Transport cost at exact norms, sum_ij pi_ij ||f(x_i) - f(y_j)||.
    pub transport_cost: f64,
    /// Dual objective at the returned potentials.
    pub objective: f64,
    pub plan: Array2<f64>,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Run Sinkhorn rounds (u then v) at a fixed sphere point until the row
/// residual after the v update drops below `tol` or `max_rounds` passes.
pub fn sinkhorn_fixed_s(
    bundle: &GramBundle,
    s: &SpherePoint,
    config: &SolverConfig,
    tol: f64,
    max_rounds: usize,
) -> Result<FixedSphereSolve> {
    config.validate()?;
    let proj = Projection::compute(s, bundle, config.kappa);
    let (n, m) = (bundle.n(), bundle.m());
    let mut u = Array1::zeros(n);
    let mut v = Array1::zeros(m);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        update_u(&proj.cost, &mut u, &v, config.eta)?;
        update_v(&proj.cost, &u, &mut v, config.eta)?;
        rounds += 1;
        let pi = plan_matrix(&proj.cost, &u, &v, config.eta)?;
        let (row_res, _) = marginal_residuals(&pi);
        if row_res <= tol {
            converged = true;
            break;
        }
    }
    let pi = plan_matrix(&proj.cost, &u, &v, config.eta)?;
    let transport_cost = pi
        .iter()
        .zip(proj.cost_exact.iter())
        .map(|(&p, &c)| p * c)
        .sum();
    let objective_value = objective(&proj.cost, &u, &v, config.eta);
    Ok(FixedSphereSolve {
        transport_cost,
        objective: objective_value,
        plan: pi,
        u,
        v,
        rounds,
        converged,
    })
}
