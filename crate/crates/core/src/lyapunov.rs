//! Lyapunov functionals `U` (infection-free) and `W` (endemic), their
//! analytic time derivatives, and a monitor that checks discrete
//! monotonicity along recorded trajectories.
//!
//! All window integrals use the same trapezoid weights as the simulator, so
//! `Σ_j w_j η_j G_j = F(t)` holds to rounding and the discrete Jensen
//! inequality holds exactly whenever `η̄ ∫A = 1`.
//!
//! Evaluators are diagnostics only; nothing here feeds back into stepping.

use serde::Serialize;

use crate::discretization::trapezoid_weight;
use crate::equilibria::EquilibriumSet;
use crate::error::{ModelError, Result};
use crate::model::{g, LyapunovKernels};
use crate::simulator::{HistoryState, Observer, RenewalModel};

/// `U = Σ_j w_j S⁰_j g(S_j / S⁰_j) + Σ_j w_j ∫ ξ(τ) η_j F(t-τ) S(t-τ, j) dτ`.
pub fn eval_u(
    history: &HistoryState,
    eq: &EquilibriumSet,
    kernels: &LyapunovKernels,
    model: &RenewalModel,
) -> Result<f64> {
    history.require_warm()?;
    let s = history.s_now();
    let mut first = 0.0;
    for (j, c) in model.grid.classes().iter().enumerate() {
        first += c.weight * eq.s0[j] * g(s[j] / eq.s0[j])?;
    }
    let (k_max, delta) = (history.k_max(), history.delta());
    let second: f64 = (0..=k_max)
        .map(|k| trapezoid_weight(k, k_max, delta) * kernels.xi[k] * history.f(k) * history.eta_s(k))
        .sum();
    Ok(first + second)
}

/// `-μ Σ_j w_j S_j (1 - S⁰_j / S_j)² - (1 - R0) F Σ_j w_j η_j S_j`.
pub fn eval_du_analytic(history: &HistoryState, eq: &EquilibriumSet, model: &RenewalModel) -> f64 {
    let s = history.s_now();
    let mu = model.params.mu;
    let quadratic = model.grid.integrate(|j| {
        let r = 1.0 - eq.s0[j] / s[j];
        s[j] * r * r
    });
    -mu * quadratic - (1.0 - eq.r0) * history.f_now() * model.grid.eta_mass(s)
}

/// Per-class window convolution `G_j = ∫ A(τ) F(t-τ) S(t-τ, j) dτ`.
pub fn eval_g(history: &HistoryState, model: &RenewalModel) -> Result<Vec<f64>> {
    history.require_warm()?;
    let a = model.kernel.samples();
    let (k_max, delta) = (history.k_max(), history.delta());
    let mut out = vec![0.0; history.classes()];
    for k in 0..=k_max {
        let weight = trapezoid_weight(k, k_max, delta) * a[k] * history.f(k);
        if weight == 0.0 {
            continue;
        }
        for (o, s) in out.iter_mut().zip(history.s(k)) {
            *o += weight * s;
        }
    }
    Ok(out)
}

fn require_interior(history: &HistoryState) -> Result<()> {
    match (0..=history.k_max()).map(|k| history.f(k)).find(|&f| !(f > 0.0)) {
        Some(f) => Err(ModelError::Domain {
            what: "endemic Lyapunov functional on a boundary state",
            value: f,
        }),
        None => Ok(()),
    }
}

/// `W = Σ_j w_j S̄_j g(S_j / S̄_j) + Σ_j w_j ∫ κ(τ) v̄_j g(F S / (F̄ S̄_j)) dτ`.
pub fn eval_w(
    history: &HistoryState,
    eq: &EquilibriumSet,
    kernels: &LyapunovKernels,
    model: &RenewalModel,
) -> Result<f64> {
    history.require_warm()?;
    let e = eq.endemic()?;
    let kappa = kernels
        .kappa
        .as_ref()
        .ok_or_else(|| ModelError::invalid("kappa", "endemic tail kernel was not built"))?;
    require_interior(history)?;
    let s = history.s_now();
    let (k_max, delta) = (history.k_max(), history.delta());
    let mut total = 0.0;
    for (j, c) in model.grid.classes().iter().enumerate() {
        total += c.weight * e.sbar[j] * g(s[j] / e.sbar[j])?;
        if e.vbar[j] == 0.0 {
            continue;
        }
        let scale = 1.0 / (e.fbar * e.sbar[j]);
        let mut window = 0.0;
        for k in 0..k_max {
            window += trapezoid_weight(k, k_max, delta)
                * kappa[k]
                * g(history.f(k) * history.s(k)[j] * scale)?;
        }
        total += c.weight * e.vbar[j] * window;
    }
    Ok(total)
}

/// Right-hand side of the `dW/dt` inequality:
/// `-μ Σ w S (1 - S̄/S)² - Σ w v̄ [g(S̄/S) + g(η̄ G / (F S̄))]`.
pub fn eval_dw_bound(history: &HistoryState, eq: &EquilibriumSet, model: &RenewalModel) -> Result<f64> {
    let e = eq.endemic()?;
    let f = history.f_now();
    if !(f > 0.0) {
        return Err(ModelError::Domain {
            what: "dW/dt bound at zero force of infection",
            value: f,
        });
    }
    let big_g = eval_g(history, model)?;
    let s = history.s_now();
    let mut quadratic = 0.0;
    let mut jensen_terms = 0.0;
    for (j, c) in model.grid.classes().iter().enumerate() {
        let r = 1.0 - e.sbar[j] / s[j];
        quadratic += c.weight * s[j] * r * r;
        if e.vbar[j] > 0.0 {
            let a = g(e.sbar[j] / s[j])?;
            let b = g(e.etabar * big_g[j] / (f * e.sbar[j]))?;
            jensen_terms += c.weight * e.vbar[j] * (a + b);
        }
    }
    Ok(-model.params.mu * quadratic - jensen_terms)
}

/// Per-class `η̄ ∫ A log(F S / (F̄ S̄_j)) - log(η̄ G_j / (F̄ S̄_j))`; Jensen's
/// inequality makes every entry `<= 0`.
pub fn jensen_excess(history: &HistoryState, eq: &EquilibriumSet, model: &RenewalModel) -> Result<Vec<f64>> {
    let e = eq.endemic()?;
    require_interior(history)?;
    let big_g = eval_g(history, model)?;
    let a = model.kernel.samples();
    let (k_max, delta) = (history.k_max(), history.delta());
    Ok((0..model.classes())
        .map(|j| {
            let scale = 1.0 / (e.fbar * e.sbar[j]);
            let mean_log: f64 = (0..=k_max)
                .filter(|&k| a[k] > 0.0)
                .map(|k| trapezoid_weight(k, k_max, delta) * a[k] * (history.f(k) * history.s(k)[j] * scale).ln())
                .sum();
            e.etabar * mean_log - (e.etabar * big_g[j] * scale).ln()
        })
        .collect())
}

/// Lyapunov diagnostics at one warm time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub step: usize,
    pub t: f64,
    pub u: f64,
    pub du_analytic: f64,
    pub w: Option<f64>,
    pub dw_bound: Option<f64>,
    pub g: Vec<f64>,
    /// Largest per-class Jensen excess.
    pub jensen_excess: Option<f64>,
}

/// Observer that evaluates both functionals on every warm state. `W` and its
/// bound are only evaluated when an endemic equilibrium exists and every
/// force slot is positive.
#[derive(Debug, Clone)]
pub struct LyapunovRecorder {
    pub equilibria: EquilibriumSet,
    pub kernels: LyapunovKernels,
    pub record_w: bool,
    pub samples: Vec<LyapunovSample>,
}

impl LyapunovRecorder {
    pub fn new(equilibria: EquilibriumSet, model: &RenewalModel) -> Result<Self> {
        let etabar = equilibria.endemic.as_ref().map(|e| e.etabar);
        let kernels = crate::model::build_lyapunov_kernels(&model.kernel, equilibria.eta0, etabar)?;
        Ok(Self {
            equilibria,
            kernels,
            record_w: true,
            samples: Vec::new(),
        })
    }

    /// Sample recorded at simulation step `n`, if any.
    pub fn at_step(&self, n: usize) -> Option<&LyapunovSample> {
        let first = self.samples.first()?.step;
        self.samples.get(n.checked_sub(first)?).filter(|s| s.step == n)
    }
}

impl Observer for LyapunovRecorder {
    fn observe(&mut self, state: &HistoryState, model: &RenewalModel) -> Result<()> {
        if !state.is_warm() {
            return Ok(());
        }
        let eq = &self.equilibria;
        let u = eval_u(state, eq, &self.kernels, model)?;
        let du_analytic = eval_du_analytic(state, eq, model);
        let g = eval_g(state, model)?;
        let interior = (0..=state.k_max()).all(|k| state.f(k) > 0.0);
        let (w, dw_bound, jensen) = if self.record_w && eq.endemic.is_some() && interior {
            let w = eval_w(state, eq, &self.kernels, model)?;
            let bound = eval_dw_bound(state, eq, model)?;
            let excess = jensen_excess(state, eq, model)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            (Some(w), Some(bound), Some(excess))
        } else {
            (None, None, None)
        };
        self.samples.push(LyapunovSample {
            step: state.steps(),
            t: state.t_now(),
            u,
            du_analytic,
            w,
            dw_bound,
            g,
            jensen_excess: jensen,
        });
        Ok(())
    }
}

/// Allowed discrete slack `C_tol · Δ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceModel {
    pub c_tol: f64,
}

impl ToleranceModel {
    pub fn tol(&self, delta: f64) -> f64 {
        self.c_tol * delta * delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub delta: f64,
    pub tol: f64,
    /// Consecutive sample pairs examined.
    pub intervals: usize,
    /// Intervals with `(U_{n+1} - U_n)/Δ > tol`.
    pub u_violations: usize,
    pub u_max_fd: Option<f64>,
    /// `max |FD(U) - (U̇_n + U̇_{n+1})/2|` over intervals.
    pub u_identity_max_err: Option<f64>,
    pub w_intervals: usize,
    /// Intervals with `(W_{n+1} - W_n)/Δ > tol`.
    pub w_violations: usize,
    /// Intervals with `FD(W) > (B_n + B_{n+1})/2 + tol`, `B` the `dW/dt` bound.
    pub w_bound_violations: usize,
    pub w_max_fd: Option<f64>,
    pub w_max_excess_over_bound: Option<f64>,
    /// Samples whose `dW/dt` bound is positive.
    pub dw_bound_positive: usize,
    /// Samples whose Jensen excess exceeds `tol`.
    pub jensen_violations: usize,
    pub jensen_max_excess: Option<f64>,
}

impl MonitorReport {
    pub fn u_certified(&self) -> bool {
        self.u_violations == 0
    }

    pub fn w_certified(&self) -> bool {
        self.w_intervals > 0
            && self.w_violations == 0
            && self.w_bound_violations == 0
            && self.dw_bound_positive == 0
            && self.jensen_violations == 0
    }
}

fn fold_max(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.max(v)))
}

/// Finite-difference monotonicity check over consecutive warm samples.
pub fn monotonicity_monitor(samples: &[LyapunovSample], delta: f64, tolerance: ToleranceModel) -> MonitorReport {
    let tol = tolerance.tol(delta);
    let mut r = MonitorReport {
        delta,
        tol,
        intervals: 0,
        u_violations: 0,
        u_max_fd: None,
        u_identity_max_err: None,
        w_intervals: 0,
        w_violations: 0,
        w_bound_violations: 0,
        w_max_fd: None,
        w_max_excess_over_bound: None,
        dw_bound_positive: 0,
        jensen_violations: 0,
        jensen_max_excess: None,
    };
    for s in samples {
        if let Some(b) = s.dw_bound {
            if b > 0.0 {
                r.dw_bound_positive += 1;
            }
        }
        if let Some(x) = s.jensen_excess {
            r.jensen_max_excess = fold_max(r.jensen_max_excess, x);
            if x > tol {
                r.jensen_violations += 1;
            }
        }
    }
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.step != a.step + 1 {
            continue;
        }
        r.intervals += 1;
        let fd_u = (b.u - a.u) / delta;
        r.u_max_fd = fold_max(r.u_max_fd, fd_u);
        if fd_u > tol {
            r.u_violations += 1;
        }
        let err = (fd_u - 0.5 * (a.du_analytic + b.du_analytic)).abs();
        r.u_identity_max_err = fold_max(r.u_identity_max_err, err);

        if let (Some(wa), Some(wb), Some(ba), Some(bb)) = (a.w, b.w, a.dw_bound, b.dw_bound) {
            r.w_intervals += 1;
            let fd_w = (wb - wa) / delta;
            r.w_max_fd = fold_max(r.w_max_fd, fd_w);
            if fd_w > tol {
                r.w_violations += 1;
            }
            let excess = fd_w - 0.5 * (ba + bb);
            r.w_max_excess_over_bound = fold_max(r.w_max_excess_over_bound, excess);
            if excess > tol {
                r.w_bound_violations += 1;
            }
        }
    }
    r
}
