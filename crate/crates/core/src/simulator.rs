//! Time stepping of the susceptibility-stratified renewal system.
//!
//! The state is the history window `[t - τ̄, t]` sampled on `K + 1` slots,
//! slot `k` holding `S(t - kΔ, ·)` and `F(t - kΔ)`. Each step
//!
//! 1. advances every `S_j` by the exact integrating-factor solution of
//!    `S' = λ_j - (μ + η_j F) S` with `F` frozen at `F(t)`,
//! 2. solves the trapezoid renewal sum for `F(t + Δ)`; the `τ = 0` node
//!    contains `F(t + Δ)` itself, so this is a scalar linear equation,
//! 3. optionally repeats the `S` update with the averaged force
//!    `(F(t) + F(t + Δ)) / 2` and re-solves for `F(t + Δ)`.
//!
//! The integrating-factor update is a convex combination of `S` and
//! `λ_j / a > 0`, so positivity of `S` is unconditional.
//!
//! Initial histories are arbitrary, so `F` generally jumps at `t = 0`. The
//! node holding time 0 carries the history value while it is the newest
//! slot, the mean of both one-sided limits while it is interior, and the
//! value produced by the dynamics once it reaches the oldest slot. This keeps
//! the trapezoid rule second order across the jump.

use serde::{Deserialize, Serialize};

use crate::discretization::trapezoid_weight;
use crate::equilibria::{EndemicEquilibrium, InfectionFree};
use crate::error::{ModelError, Result};
use crate::model::{InfectivityKernel, ModelParams, SigmaGrid};

/// Everything needed to step the system.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalModel {
    pub grid: SigmaGrid,
    pub params: ModelParams,
    pub kernel: InfectivityKernel,
    /// Whether to run the corrector pass.
    pub corrector: bool,
}

impl RenewalModel {
    pub fn new(grid: SigmaGrid, params: ModelParams, kernel: InfectivityKernel) -> Self {
        Self {
            grid,
            params,
            kernel,
            corrector: true,
        }
    }

    pub fn with_corrector(mut self, corrector: bool) -> Self {
        self.corrector = corrector;
        self
    }

    pub fn delta(&self) -> f64 {
        self.kernel.delta()
    }

    pub fn k_max(&self) -> usize {
        self.kernel.k_max()
    }

    pub fn classes(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    fn weight(&self, k: usize) -> f64 {
        trapezoid_weight(k, self.k_max(), self.delta())
    }
}

/// Sampled initial history; slot `k` is the time `s = -kΔ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    classes: usize,
    s: Vec<f64>,
    f: Vec<f64>,
}

impl InitialCondition {
    pub fn from_fn(
        model: &RenewalModel,
        s_init: impl Fn(f64, usize) -> f64,
        f_init: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let m = model.classes();
        let slots = model.k_max() + 1;
        let delta = model.delta();
        let mut s = Vec::with_capacity(slots * m);
        let mut f = Vec::with_capacity(slots);
        for k in 0..slots {
            let time = -(k as f64) * delta;
            f.push(f_init(time));
            s.extend((0..m).map(|j| s_init(time, j)));
        }
        Self::from_samples(m, s, f)
    }

    /// `s` is row-major by slot, `m` classes per row.
    pub fn from_samples(classes: usize, s: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if s.len() != f.len() * classes {
            return Err(ModelError::Dimension {
                expected: f.len() * classes,
                got: s.len(),
            });
        }
        if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::invalid(
                format!("initial S at slot {}, class {}", i / classes, i % classes),
                format!("must be finite and > 0, got {}", s[i]),
            ));
        }
        if let Some(k) = f.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::invalid(
                format!("initial F at slot {k}"),
                format!("must be finite and >= 0, got {}", f[k]),
            ));
        }
        Ok(Self { classes, s, f })
    }

    /// Constant history.
    pub fn constant(model: &RenewalModel, s: &[f64], f: f64) -> Result<Self> {
        if s.len() != model.classes() {
            return Err(ModelError::Dimension {
                expected: model.classes(),
                got: s.len(),
            });
        }
        Self::from_fn(model, |_, j| s[j], |_| f)
    }

    pub fn at_infection_free(model: &RenewalModel, free: &InfectionFree) -> Result<Self> {
        Self::constant(model, &free.s0, 0.0)
    }

    pub fn at_endemic(model: &RenewalModel, endemic: &EndemicEquilibrium) -> Result<Self> {
        Self::constant(model, &endemic.sbar, endemic.fbar)
    }

    pub fn slots(&self) -> usize {
        self.f.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn s(&self, k: usize) -> &[f64] {
        &self.s[k * self.classes..(k + 1) * self.classes]
    }

    pub fn f(&self, k: usize) -> f64 {
        self.f[k]
    }
}

/// Named initial-history profiles. Susceptibles are per-class constants,
/// given either explicitly (`s`) or as a multiple of `S⁰` (`s_factor`);
/// with neither, `S = S⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_factor: Option<f64>,
        f: f64,
    },
    /// `F` linear from `f_oldest` at `s = -τ̄` to `f_newest` at `s = 0`.
    Ramp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_factor: Option<f64>,
        f_oldest: f64,
        f_newest: f64,
    },
    /// `F = f` on the oldest slot only.
    PulseOldest {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_factor: Option<f64>,
        f: f64,
    },
}

impl InitialProfile {
    fn susceptibles(&self, free: &InfectionFree) -> Result<Vec<f64>> {
        let (s, factor) = match self {
            InitialProfile::Constant { s, s_factor, .. }
            | InitialProfile::Ramp { s, s_factor, .. }
            | InitialProfile::PulseOldest { s, s_factor, .. } => (s, s_factor),
        };
        match (s, factor) {
            (Some(_), Some(_)) => Err(ModelError::invalid(
                "initial",
                "give at most one of `s` and `s_factor`",
            )),
            (Some(s), None) => {
                if s.len() != free.s0.len() {
                    return Err(ModelError::invalid(
                        "initial.s",
                        format!("expected {} values, got {}", free.s0.len(), s.len()),
                    ));
                }
                Ok(s.clone())
            }
            (None, Some(c)) => Ok(free.s0.iter().map(|s0| c * s0).collect()),
            (None, None) => Ok(free.s0.clone()),
        }
    }

    pub fn realize(&self, model: &RenewalModel, free: &InfectionFree) -> Result<InitialCondition> {
        let s = self.susceptibles(free)?;
        let tau_bar = model.kernel.tau_bar();
        let oldest = -(model.k_max() as f64) * model.delta();
        match *self {
            InitialProfile::Constant { f, .. } => InitialCondition::constant(model, &s, f),
            InitialProfile::Ramp {
                f_oldest, f_newest, ..
            } => InitialCondition::from_fn(
                model,
                |_, j| s[j],
                |time| f_newest + (f_oldest - f_newest) * (-time / tau_bar),
            ),
            InitialProfile::PulseOldest { f, .. } => InitialCondition::from_fn(
                model,
                |_, j| s[j],
                |time| if time <= oldest { f } else { 0.0 },
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OriginJump {
    left: f64,
    right: f64,
}

/// Sliding history window `[t - τ̄, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    k_max: usize,
    classes: usize,
    delta: f64,
    steps: usize,
    /// Physical index of the newest slot.
    head: usize,
    f: Vec<f64>,
    s: Vec<f64>,
    /// `Σ_j w_j η_j S_j` per slot.
    eta_s: Vec<f64>,
    origin: Option<OriginJump>,
}

impl HistoryState {
    pub fn new(ic: &InitialCondition, model: &RenewalModel) -> Result<Self> {
        let slots = model.k_max() + 1;
        if ic.slots() != slots {
            return Err(ModelError::Dimension {
                expected: slots,
                got: ic.slots(),
            });
        }
        if ic.classes() != model.classes() {
            return Err(ModelError::Dimension {
                expected: model.classes(),
                got: ic.classes(),
            });
        }
        let eta_s = (0..slots).map(|k| model.grid.eta_mass(ic.s(k))).collect();
        let mut state = Self {
            k_max: model.k_max(),
            classes: model.classes(),
            delta: model.delta(),
            steps: 0,
            head: 0,
            f: ic.f.clone(),
            s: ic.s.clone(),
            eta_s,
            origin: None,
        };
        // F(0+) follows from the history alone
        let a = model.kernel.samples();
        let right: f64 = (0..slots)
            .map(|k| model.weight(k) * a[k] * state.f[k] * state.eta_s[k])
            .sum();
        let left = state.f[0];
        if right != left {
            state.origin = Some(OriginJump { left, right });
        }
        Ok(state)
    }

    /// Treats a sampled window as the state at `t = τ̄`: warm, with no
    /// initial-data jump inside the window.
    pub fn warm_from(window: &InitialCondition, model: &RenewalModel) -> Result<Self> {
        let mut state = Self::new(window, model)?;
        state.steps = state.k_max;
        state.origin = None;
        Ok(state)
    }

    #[inline]
    fn phys(&self, k: usize) -> usize {
        let n = self.k_max + 1;
        let i = self.head + k;
        if i >= n {
            i - n
        } else {
            i
        }
    }

    pub fn t_now(&self) -> f64 {
        self.steps as f64 * self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn tau_bar(&self) -> f64 {
        self.k_max as f64 * self.delta
    }

    /// True once at least `τ̄` of simulated time has elapsed.
    pub fn is_warm(&self) -> bool {
        self.steps >= self.k_max
    }

    pub fn require_warm(&self) -> Result<()> {
        if self.is_warm() {
            Ok(())
        } else {
            Err(ModelError::NotWarm {
                t: self.t_now(),
                tau_bar: self.tau_bar(),
            })
        }
    }

    /// `S(t - kΔ, ·)`.
    pub fn s(&self, k: usize) -> &[f64] {
        let p = self.phys(k);
        &self.s[p * self.classes..(p + 1) * self.classes]
    }

    /// Stored value of `F(t - kΔ)`.
    pub fn f_raw(&self, k: usize) -> f64 {
        self.f[self.phys(k)]
    }

    /// Value of `F(t - kΔ)` entering trapezoid sums over the window.
    #[inline]
    pub fn f(&self, k: usize) -> f64 {
        match self.origin {
            Some(jump) if k == self.steps && k > 0 => {
                if k == self.k_max {
                    jump.right
                } else {
                    0.5 * (jump.left + jump.right)
                }
            }
            _ => self.f[self.phys(k)],
        }
    }

    /// `Σ_j w_j η_j S(t - kΔ, j)`.
    pub fn eta_s(&self, k: usize) -> f64 {
        self.eta_s[self.phys(k)]
    }

    pub fn s_now(&self) -> &[f64] {
        self.s(0)
    }

    /// `F(t)` as seen by the dynamics (the right limit at `t = 0`).
    pub fn f_now(&self) -> f64 {
        match self.origin {
            Some(jump) if self.steps == 0 => jump.right,
            _ => self.f_raw(0),
        }
    }

    fn push(&mut self, s_new: &[f64], eta_s_new: f64) {
        self.head = if self.head == 0 { self.k_max } else { self.head - 1 };
        let p = self.head;
        self.s[p * self.classes..(p + 1) * self.classes].copy_from_slice(s_new);
        self.eta_s[p] = eta_s_new;
        self.f[p] = 0.0;
        self.steps += 1;
        if self.steps > self.k_max {
            self.origin = None;
        }
    }

    fn set_newest(&mut self, s_new: Option<(&[f64], f64)>, f_new: f64) {
        let p = self.head;
        if let Some((s, eta_s)) = s_new {
            self.s[p * self.classes..(p + 1) * self.classes].copy_from_slice(s);
            self.eta_s[p] = eta_s;
        }
        self.f[p] = f_new;
    }
}

/// Solves the trapezoid renewal sum for `F` at the history's current time,
/// with `s_now` standing in for the newest slot's susceptibles.
pub fn force_of_infection(history: &HistoryState, model: &RenewalModel, s_now: &[f64]) -> Result<f64> {
    let a = model.kernel.samples();
    let k_max = history.k_max();
    let explicit: f64 = (1..=k_max)
        .map(|k| model.weight(k) * a[k] * history.f(k) * history.eta_s(k))
        .sum();
    let implicit = model.weight(0) * a[0] * model.grid.eta_mass(s_now);
    if implicit >= 1.0 {
        return Err(ModelError::StepTooLarge {
            weight: implicit,
            delta: model.delta(),
        });
    }
    Ok(explicit / (1.0 - implicit))
}

fn advance_susceptibles(model: &RenewalModel, s: &[f64], force: f64, out: &mut [f64]) {
    let mu = model.params.mu;
    let delta = model.delta();
    for ((c, &s_old), s_new) in model.grid.classes().iter().zip(s).zip(out.iter_mut()) {
        let rate = mu + c.eta * force;
        let target = c.lambda / rate;
        *s_new = target + (s_old - target) * (-rate * delta).exp();
    }
}

/// Advances the state by one step `Δ`.
pub fn step(history: &mut HistoryState, model: &RenewalModel) -> Result<()> {
    let f_old = history.f_now();
    let s_old = history.s_now().to_vec();
    let mut s_new = vec![0.0; s_old.len()];
    advance_susceptibles(model, &s_old, f_old, &mut s_new);
    history.push(&s_new, model.grid.eta_mass(&s_new));
    let mut f_new = force_of_infection(history, model, &s_new)?;
    if model.corrector {
        advance_susceptibles(model, &s_old, 0.5 * (f_old + f_new), &mut s_new);
        history.set_newest(Some((&s_new, model.grid.eta_mass(&s_new))), 0.0);
        f_new = force_of_infection(history, model, &s_new)?;
    }
    history.set_newest(None, f_new);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Interior,
    Boundary,
}

/// Interior iff some grid shift `a = iΔ` gives a positive shifted renewal
/// sum `Σ_k w_k A_{k+i} η·F(-kΔ) S(-kΔ)`.
pub fn classify_initial(ic: &InitialCondition, model: &RenewalModel) -> Classification {
    let a = model.kernel.samples();
    let k_max = model.k_max();
    let integrand: Vec<f64> = (0..=k_max)
        .map(|k| model.weight(k) * ic.f(k) * model.grid.eta_mass(ic.s(k)))
        .collect();
    let interior = (0..=k_max).any(|shift| {
        (0..=k_max - shift)
            .map(|k| a[k + shift] * integrand[k])
            .sum::<f64>()
            > 0.0
    });
    if interior {
        Classification::Interior
    } else {
        Classification::Boundary
    }
}

/// Callback run on the initial state and after every step.
pub trait Observer {
    fn observe(&mut self, state: &HistoryState, model: &RenewalModel) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&HistoryState, &RenewalModel) -> Result<()>,
{
    fn observe(&mut self, state: &HistoryState, model: &RenewalModel) -> Result<()> {
        self(state, model)
    }
}

/// Per-step time series of the newest slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub force: Vec<f64>,
    /// `susceptibles[n][j]` is `S(t_n, j)`.
    pub susceptibles: Vec<Vec<f64>>,
    /// Index of the first warm row.
    pub warm_index: Option<usize>,
    pub final_state: HistoryState,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn warm_time(&self) -> Option<f64> {
        self.warm_index.map(|i| self.times[i])
    }
}

/// Number of steps needed to reach `t_end`.
pub fn steps_to(t_end: f64, delta: f64) -> usize {
    let r = t_end / delta;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.ceil() as usize
    }
}

pub fn simulate(
    ic: &InitialCondition,
    model: &RenewalModel,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryRecord> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(ModelError::invalid("t_end", format!("must be finite and > 0, got {t_end}")));
    }
    let n_steps = steps_to(t_end, model.delta());
    let mut state = HistoryState::new(ic, model)?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut force = Vec::with_capacity(n_steps + 1);
    let mut susceptibles = Vec::with_capacity(n_steps + 1);
    let mut warm_index = None;

    let at = |t: f64| move |e: ModelError| ModelError::AtTime { t, source: Box::new(e) };
    for n in 0..=n_steps {
        if n > 0 {
            step(&mut state, model).map_err(at(n as f64 * model.delta()))?;
        }
        times.push(state.t_now());
        force.push(state.f_now());
        susceptibles.push(state.s_now().to_vec());
        if warm_index.is_none() && state.is_warm() {
            warm_index = Some(n);
        }
        for obs in observers.iter_mut() {
            obs.observe(&state, model).map_err(at(state.t_now()))?;
        }
    }
    Ok(TrajectoryRecord {
        times,
        force,
        susceptibles,
        warm_index,
        final_state: state,
    })
}
