//! Adjoint-based conjugate gradient estimation of the `S_IN` flux.
//!
//! The iteration count is the regularization parameter: the loop is stopped
//! by the cost tolerance, a relative-change test, the discrepancy principle or
//! an iteration cap, whichever fires first.

use serde::{Deserialize, Serialize};

use crate::benchmarks::relative_error_norms;
use crate::error::{Error, Result};
use crate::grid::PatchId;
use crate::measurements::MeasurementSet;
use crate::solvers::{
    patch_inner, patch_integral, residuals, solve_adjoint, solve_direct_with_flux, solve_sensitivity, PhysicalCase,
    TemperatureField,
};

/// Functional being minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostMode {
    /// Sensor misfit only.
    J1,
    /// Sensor misfit plus `p_g/2 (∫g - Ĝ)²`.
    J2 { p_g: f64, g_hat: f64 },
}

impl CostMode {
    pub fn validate(&self) -> Result<()> {
        if let CostMode::J2 { p_g, g_hat } = *self {
            if !(p_g >= 0.0 && p_g.is_finite()) {
                return Err(Error::invalid(format!("total-heat weight must be non-negative, got {p_g}")));
            }
            if !g_hat.is_finite() {
                return Err(Error::invalid("total heat must be finite"));
            }
        }
        Ok(())
    }

    /// `(p_g, Ĝ)`, or `None` in J1 mode.
    pub fn total_heat_term(&self) -> Option<(f64, f64)> {
        match *self {
            CostMode::J1 => None,
            CostMode::J2 { p_g, g_hat } => Some((p_g, g_hat)),
        }
    }
}

/// Form of the discrepancy threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DpThreshold {
    /// `(ω² M / 2)²`.
    #[default]
    Squared,
    /// `ω² M / 2`, the expected value of `J1` under the noise model.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub omega: f64,
    pub sensors: usize,
    #[serde(default)]
    pub threshold: DpThreshold,
}

impl Discrepancy {
    pub fn value(&self) -> f64 {
        let base = self.omega * self.omega * self.sensors as f64 / 2.0;
        match self.threshold {
            DpThreshold::Squared => base * base,
            DpThreshold::Linear => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Absolute cost tolerance (K²).
    pub j_tol: f64,
    pub max_iter: usize,
    /// Stop when `|Jⁿ - Jⁿ⁻¹| / Jⁿ` falls below this.
    pub rel_change_tol: Option<f64>,
    pub discrepancy: Option<Discrepancy>,
    /// Reset the conjugate coefficient every K iterations. Off by default.
    pub restart_every: Option<usize>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            j_tol: 1e-4,
            max_iter: 100,
            rel_change_tol: None,
            discrepancy: None,
            restart_every: None,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.j_tol >= 0.0) {
            return Err(Error::invalid(format!("J_tol must be non-negative, got {}", self.j_tol)));
        }
        if let Some(t) = self.rel_change_tol {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("relative-change tolerance must be positive, got {t}")));
            }
        }
        if let Some(dp) = &self.discrepancy {
            if !(dp.omega >= 0.0 && dp.omega.is_finite()) || dp.sensors == 0 {
                return Err(Error::invalid("discrepancy principle needs omega >= 0 and at least one sensor"));
            }
        }
        if self.restart_every == Some(0) {
            return Err(Error::invalid("restart period must be at least 1"));
        }
        let any = self.j_tol > 0.0
            || self.max_iter != usize::MAX
            || self.rel_change_tol.is_some()
            || self.discrepancy.is_some();
        if !any {
            return Err(Error::invalid("stopping rule has no active criterion"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CostTolerance,
    Discrepancy,
    RelativeChange,
    MaxIterations,
    ZeroGradient,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgState {
    pub g: Vec<f64>,
    pub direction: Vec<f64>,
    pub gradient: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub iter: usize,
    pub j_history: Vec<f64>,
}

/// One row of the iteration trace; `beta`/`gamma` are absent on the row where the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub err_l2: Option<f64>,
    pub err_linf: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlifanovOutcome {
    pub g: Vec<f64>,
    pub state: CgState,
    pub trace: Vec<IterationRecord>,
    pub reason: StopReason,
    /// The returned flux is the best iterate seen rather than the last one.
    pub stagnated: bool,
}

fn cost(mode: &CostMode, res: &[f64], case: &PhysicalCase, g: &[f64]) -> f64 {
    let j1 = 0.5 * res.iter().map(|r| r * r).sum::<f64>();
    match mode.total_heat_term() {
        None => j1,
        Some((p_g, g_hat)) => {
            let m = patch_integral(case.grid(), PatchId::SIn, g) - g_hat;
            j1 + 0.5 * p_g * m * m
        }
    }
}

fn gradient_from(case: &PhysicalCase, t: &TemperatureField, sensors: &MeasurementSet, g: &[f64], mode: &CostMode) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = case.grid();
    let res = residuals(t, grid, sensors)?;
    let sources: Vec<_> = sensors.points.iter().copied().zip(res.iter().copied()).collect();
    let lambda = solve_adjoint(case, &sources)?;
    let shift = match mode.total_heat_term() {
        None => 0.0,
        Some((p_g, g_hat)) => p_g * (patch_integral(grid, PatchId::SIn, g) - g_hat),
    };
    let grad = lambda.patch_trace(grid, PatchId::SIn).iter().map(|l| shift - l).collect();
    Ok((grad, res))
}

/// Derivative of the cost at `g` as a face field on `S_IN` (one direct and one adjoint solve).
pub fn gradient(case: &PhysicalCase, g: &[f64], sensors: &MeasurementSet, mode: &CostMode) -> Result<Vec<f64>> {
    mode.validate()?;
    let t = solve_direct_with_flux(case, g)?;
    Ok(gradient_from(case, &t, sensors, g, mode)?.0)
}

/// Fletcher–Reeves coefficient; `None` when the previous gradient vanishes.
pub fn fletcher_reeves_gamma(case: &PhysicalCase, grad: &[f64], grad_prev: &[f64]) -> Option<f64> {
    let grid = case.grid();
    let den = patch_inner(grid, PatchId::SIn, grad_prev, grad_prev);
    if den == 0.0 {
        return None;
    }
    Some(patch_inner(grid, PatchId::SIn, grad, grad) / den)
}

/// Exact line-search step from sensor residuals and the sensitivity samples.
pub fn line_search_beta(
    res: &[f64],
    dt: &[f64],
    p_integral: f64,
    g_integral: f64,
    mode: &CostMode,
) -> Result<f64> {
    let mut num: f64 = res.iter().zip(dt).map(|(r, d)| r * d).sum();
    let mut den: f64 = dt.iter().map(|d| d * d).sum();
    if let Some((p_g, g_hat)) = mode.total_heat_term() {
        num += p_g * p_integral * (g_integral - g_hat);
        den += p_g * p_integral * p_integral;
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Stagnation);
    }
    Ok(num / den)
}

/// Step along `-p` minimizing the cost from `g`; one direct and one sensitivity solve.
pub fn step_size_beta(case: &PhysicalCase, g: &[f64], p: &[f64], sensors: &MeasurementSet, mode: &CostMode) -> Result<f64> {
    mode.validate()?;
    let grid = case.grid();
    let t = solve_direct_with_flux(case, g)?;
    let res = residuals(&t, grid, sensors)?;
    let dt = solve_sensitivity(case, p)?.sample_points(grid, &sensors.points)?;
    line_search_beta(&res, &dt, patch_integral(grid, PatchId::SIn, p), patch_integral(grid, PatchId::SIn, g), mode)
}

/// Runs the conjugate gradient loop from `g0`.
///
/// `reference`, when given, is the true flux used to record error norms per iteration.
pub fn run(
    case: &PhysicalCase,
    sensors: &MeasurementSet,
    g0: &[f64],
    rule: &StoppingRule,
    mode: &CostMode,
    reference: Option<&[f64]>,
) -> Result<AlifanovOutcome> {
    rule.validate()?;
    mode.validate()?;
    sensors.check_inside(case.grid())?;
    if g0.len() != case.flux_len() {
        return Err(Error::invalid(format!("g0 has {} values, S_IN has {} faces", g0.len(), case.flux_len())));
    }
    let grid = case.grid();
    let errors = |g: &[f64]| -> Result<(Option<f64>, Option<f64>)> {
        match reference {
            Some(r) => relative_error_norms(grid, g, r).map(|(a, b)| (Some(a), Some(b))),
            None => Ok((None, None)),
        }
    };
    let dp = rule.discrepancy.map(|d| d.value());

    let mut state = CgState {
        g: g0.to_vec(),
        direction: vec![0.0; g0.len()],
        gradient: vec![0.0; g0.len()],
        gamma: 0.0,
        beta: 0.0,
        iter: 0,
        j_history: Vec::new(),
    };
    let mut trace = Vec::new();
    let mut best: (f64, Vec<f64>) = (f64::INFINITY, state.g.clone());

    let reason = loop {
        let n = state.iter;
        let t = solve_direct_with_flux(case, &state.g)?;
        let res = residuals(&t, grid, sensors)?;
        let j = cost(mode, &res, case, &state.g);
        if !j.is_finite() {
            return Err(Error::NoConvergence { iterations: n, residual: j });
        }
        state.j_history.push(j);
        if j < best.0 {
            best = (j, state.g.clone());
        }
        let (err_l2, err_linf) = errors(&state.g)?;
        let mut record = IterationRecord { iter: n, j, beta: None, gamma: None, err_l2, err_linf };

        let stop = if j < rule.j_tol {
            Some(StopReason::CostTolerance)
        } else if dp.is_some_and(|d| j < d) {
            Some(StopReason::Discrepancy)
        } else if n >= 1 && rule.rel_change_tol.is_some_and(|tol| (state.j_history[n - 1] - j).abs() / j < tol) {
            Some(StopReason::RelativeChange)
        } else if n >= rule.max_iter {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(reason) = stop {
            trace.push(record);
            break reason;
        }

        let (grad, _) = gradient_from(case, &t, sensors, &state.g, mode)?;
        let restart = rule.restart_every.is_some_and(|k| n % k == 0);
        let gamma = if n == 0 || restart {
            Some(0.0)
        } else {
            fletcher_reeves_gamma(case, &grad, &state.gradient)
        };
        let Some(gamma) = gamma else {
            trace.push(record);
            break StopReason::ZeroGradient;
        };
        if patch_inner(grid, PatchId::SIn, &grad, &grad) == 0.0 {
            state.gradient = grad;
            trace.push(record);
            break StopReason::ZeroGradient;
        }
        for (p, gr) in state.direction.iter_mut().zip(&grad) {
            *p = gr + gamma * *p;
        }
        state.gradient = grad;
        state.gamma = gamma;

        let dt = solve_sensitivity(case, &state.direction)?.sample_points(grid, &sensors.points)?;
        let beta = match line_search_beta(
            &res,
            &dt,
            patch_integral(grid, PatchId::SIn, &state.direction),
            patch_integral(grid, PatchId::SIn, &state.g),
            mode,
        ) {
            Ok(b) => b,
            Err(Error::Stagnation) => {
                trace.push(record);
                log::warn!("search direction is invisible to the sensors at iteration {n}");
                let g = best.1.clone();
                return Ok(AlifanovOutcome { g, state, trace, reason: StopReason::Stagnation, stagnated: true });
            }
            Err(e) => return Err(e),
        };
        state.beta = beta;
        record.beta = Some(beta);
        record.gamma = Some(gamma);
        trace.push(record);
        for (g, p) in state.g.iter_mut().zip(&state.direction) {
            *g -= beta * p;
        }
        if state.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence { iterations: n, residual: f64::NAN });
        }
        state.iter += 1;
    };

    Ok(AlifanovOutcome { g: state.g.clone(), state, trace, reason, stagnated: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::AnalyticalCase;
    use crate::solvers::solve_direct_with_flux;

    fn setup(n: usize, sensors: usize) -> (PhysicalCase, MeasurementSet, Vec<f64>) {
        let an = AnalyticalCase::default();
        let case = an.physical_case([n, n, n]).unwrap();
        let pts = an.sensor_points(case.grid(), sensors).unwrap();
        let truth = an.true_flux(case.grid());
        let t = solve_direct_with_flux(&case, &truth).unwrap();
        let vals = t.sample_points(case.grid(), &pts).unwrap();
        (case, MeasurementSet::new(pts, vals).unwrap(), truth)
    }

    #[test]
    fn gamma_examples() {
        let (case, _, _) = setup(4, 4);
        let a = vec![1.0; case.flux_len()];
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((fletcher_reeves_gamma(&case, &a, &b).unwrap() - 1.0).abs() < 1e-15);
        let z = vec![0.0; case.flux_len()];
        assert_eq!(fletcher_reeves_gamma(&case, &z, &a), Some(0.0));
        let two: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        assert!((fletcher_reeves_gamma(&case, &two, &a).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(fletcher_reeves_gamma(&case, &a, &z), None);
    }

    #[test]
    fn beta_examples() {
        assert_eq!(line_search_beta(&[2.0], &[1.0], 0.0, 0.0, &CostMode::J1).unwrap(), 2.0);
        assert_eq!(line_search_beta(&[0.0, 0.0], &[1.0, 3.0], 0.0, 0.0, &CostMode::J1).unwrap(), 0.0);
        assert!(matches!(line_search_beta(&[1.0], &[0.0], 0.0, 0.0, &CostMode::J1), Err(Error::Stagnation)));
        let m = CostMode::J2 { p_g: 0.5, g_hat: 4.0 };
        // (0 + 0.5*2*(6-4)) / (0 + 0.5*4)
        assert!((line_search_beta(&[0.0], &[0.0], 2.0, 6.0, &m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn j2_gradient_shift_without_misfit() {
        let (case, sensors, truth) = setup(6, 4);
        let g_int = patch_integral(case.grid(), PatchId::SIn, &truth);
        let mode = CostMode::J2 { p_g: 0.1, g_hat: g_int - 10.0 };
        let grad = gradient(&case, &truth, &sensors, &mode).unwrap();
        // residuals vanish, so the adjoint is zero up to solver precision
        for v in grad {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        let zero = gradient(&case, &truth, &sensors, &CostMode::J1).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (case, sensors, _) = setup(8, 9);
        let grid = case.grid().clone();
        let g: Vec<f64> = grid.sample_patch(PatchId::SIn, |p| 20.0 + 5.0 * p[2]);
        let dg: Vec<f64> = grid.sample_patch(PatchId::SIn, |p| (2.0 * p[0]).cos() + p[2]);
        for mode in [CostMode::J1, CostMode::J2 { p_g: 0.01, g_hat: 50.0 }] {
            let grad = gradient(&case, &g, &sensors, &mode).unwrap();
            let analytic = patch_inner(&grid, PatchId::SIn, &grad, &dg);
            let j = |g: &[f64]| {
                let t = solve_direct_with_flux(&case, g).unwrap();
                cost(&mode, &residuals(&t, &grid, &sensors).unwrap(), &case, g)
            };
            let eps = 1e-4;
            let gp: Vec<f64> = g.iter().zip(&dg).map(|(a, b)| a + eps * b).collect();
            let gm: Vec<f64> = g.iter().zip(&dg).map(|(a, b)| a - eps * b).collect();
            let fd = (j(&gp) - j(&gm)) / (2.0 * eps);
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn single_sensor_step_is_exact_minimizer() {
        let (case, sensors, _) = setup(8, 1);
        let g0 = vec![0.0; case.flux_len()];
        let rule = StoppingRule { j_tol: 0.0, max_iter: 1, ..Default::default() };
        let out = run(&case, &sensors, &g0, &rule, &CostMode::J1, None).unwrap();
        assert_eq!(out.reason, StopReason::MaxIterations);
        // one unknown direction: the residual at the single sensor vanishes
        assert!(out.state.j_history[1] < 1e-12 * out.state.j_history[0], "{:?}", out.state.j_history);
    }

    #[test]
    fn consistent_start_stops_immediately() {
        let (case, sensors, truth) = setup(6, 4);
        let rule = StoppingRule { j_tol: 1e-12, ..Default::default() };
        let out = run(&case, &sensors, &truth, &rule, &CostMode::J1, Some(&truth)).unwrap();
        assert_eq!(out.reason, StopReason::CostTolerance);
        assert_eq!(out.trace.len(), 1);
        assert!(out.trace[0].j < 1e-12);
        assert_eq!(out.trace[0].err_l2, Some(0.0));
    }

    #[test]
    fn line_search_beats_neighbours() {
        let (case, sensors, _) = setup(8, 16);
        let grid = case.grid().clone();
        let g = vec![0.0; case.flux_len()];
        let p = gradient(&case, &g, &sensors, &CostMode::J1).unwrap();
        let beta = step_size_beta(&case, &g, &p, &sensors, &CostMode::J1).unwrap();
        let j = |s: f64| {
            let gs: Vec<f64> = g.iter().zip(&p).map(|(a, b)| a - s * b).collect();
            let t = solve_direct_with_flux(&case, &gs).unwrap();
            cost(&CostMode::J1, &residuals(&t, &grid, &sensors).unwrap(), &case, &gs)
        };
        let jb = j(beta);
        assert!(jb <= j(0.5 * beta) && jb <= j(2.0 * beta) && jb < j(0.0));
    }

    #[test]
    fn discrepancy_thresholds() {
        let d = Discrepancy { omega: 0.02, sensors: 16, threshold: DpThreshold::Squared };
        assert!((d.value() - 1.024e-5).abs() < 1e-18);
        let d = Discrepancy { threshold: DpThreshold::Linear, ..d };
        assert!((d.value() - 3.2e-3).abs() < 1e-15);
    }

    #[test]
    fn stopping_rule_validation() {
        let none = StoppingRule { j_tol: 0.0, max_iter: usize::MAX, ..Default::default() };
        assert!(none.validate().is_err());
        assert!(StoppingRule { restart_every: Some(0), ..Default::default() }.validate().is_err());
        assert!(StoppingRule::default().validate().is_ok());
    }

    #[test]
    fn cost_decreases_and_iterates_stay_finite() {
        let (case, sensors, truth) = setup(8, 16);
        let g0 = vec![0.0; case.flux_len()];
        let rule = StoppingRule { j_tol: 1e-10, max_iter: 15, ..Default::default() };
        let out = run(&case, &sensors, &g0, &rule, &CostMode::J1, Some(&truth)).unwrap();
        let h = &out.state.j_history;
        for w in h.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{h:?}");
        }
        assert!(out.g.iter().all(|v| v.is_finite()));
        assert_eq!(out.trace.len(), h.len());
    }
}
