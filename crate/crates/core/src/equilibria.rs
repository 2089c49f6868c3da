//! Infection-free and endemic equilibria, the basic reproduction number and
//! the existence threshold `R0 > 1`.

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::model::{InfectivityKernel, ModelParams, SigmaGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfectionFree {
    /// `S⁰_j = λ_j / μ`.
    pub s0: Vec<f64>,
    /// `η⁰ = Σ_j w_j η_j S⁰_j`.
    pub eta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndemicEquilibrium {
    pub fbar: f64,
    pub sbar: Vec<f64>,
    pub etabar: f64,
    /// Endemic incidence density `v̄_j = η_j F̄ S̄_j`.
    pub vbar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub s0: Vec<f64>,
    pub eta0: f64,
    pub r0: f64,
    /// Trapezoid mass of the kernel, `∫A`.
    pub kernel_mass: f64,
    pub endemic: Option<EndemicEquilibrium>,
}

impl EquilibriumSet {
    pub fn endemic(&self) -> Result<&EndemicEquilibrium> {
        self.endemic.as_ref().ok_or(ModelError::NoEndemic { r0: self.r0 })
    }
}

/// Bisection settings for the endemic force of infection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_doublings: usize,
    /// Allowed `|η̄ ∫A - 1|` at the returned equilibrium.
    pub identity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 200,
            max_doublings: 200,
            identity_tol: 1e-9,
        }
    }
}

pub fn infection_free(grid: &SigmaGrid, params: &ModelParams) -> InfectionFree {
    let s0: Vec<f64> = grid.classes().iter().map(|c| c.lambda / params.mu).collect();
    let eta0 = grid.eta_mass(&s0);
    InfectionFree { s0, eta0 }
}

pub fn basic_reproduction_number(eta0: f64, kernel: &InfectivityKernel) -> f64 {
    eta0 * kernel.mass()
}

fn rhs_with_mass(f: f64, grid: &SigmaGrid, params: &ModelParams, mass: f64) -> f64 {
    grid.classes()
        .iter()
        .map(|c| c.weight * c.eta * c.lambda / (params.mu + c.eta * f))
        .sum::<f64>()
        * mass
}

/// `[Σ_j w_j η_j λ_j / (μ + η_j F)] · ∫A`; equals `R0` at `F = 0` and is
/// strictly decreasing in `F`.
pub fn endemic_equation_rhs(
    f: f64,
    grid: &SigmaGrid,
    params: &ModelParams,
    kernel: &InfectivityKernel,
) -> f64 {
    rhs_with_mass(f, grid, params, kernel.mass())
}

pub fn solve_endemic(
    grid: &SigmaGrid,
    params: &ModelParams,
    kernel: &InfectivityKernel,
) -> Result<Option<EndemicEquilibrium>> {
    solve_endemic_with(grid, params, kernel, SolverOptions::default())
}

pub fn solve_endemic_with(
    grid: &SigmaGrid,
    params: &ModelParams,
    kernel: &InfectivityKernel,
    opts: SolverOptions,
) -> Result<Option<EndemicEquilibrium>> {
    let mass = kernel.mass();
    let r0 = basic_reproduction_number(infection_free(grid, params).eta0, kernel);
    if r0 <= 1.0 {
        return Ok(None);
    }
    let rhs = |f: f64| rhs_with_mass(f, grid, params, mass);

    let mut hi = 1.0;
    let mut doublings = 0;
    while rhs(hi) >= 1.0 {
        if doublings == opts.max_doublings {
            return Err(ModelError::Bracketing { doublings });
        }
        hi *= 2.0;
        doublings += 1;
    }
    let mut lo = 0.0;
    for _ in 0..opts.max_iter {
        if hi - lo <= opts.rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if rhs(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fbar = 0.5 * (lo + hi);

    let sbar: Vec<f64> = grid
        .classes()
        .iter()
        .map(|c| c.lambda / (params.mu + c.eta * fbar))
        .collect();
    let etabar = grid.eta_mass(&sbar);
    let vbar = grid
        .classes()
        .iter()
        .zip(&sbar)
        .map(|(c, s)| c.eta * fbar * s)
        .collect();
    let identity = etabar * mass;
    if !((identity - 1.0).abs() <= opts.identity_tol) {
        return Err(ModelError::Consistency { value: identity });
    }
    Ok(Some(EndemicEquilibrium {
        fbar,
        sbar,
        etabar,
        vbar,
    }))
}

pub fn equilibrium_set(
    grid: &SigmaGrid,
    params: &ModelParams,
    kernel: &InfectivityKernel,
    opts: SolverOptions,
) -> Result<EquilibriumSet> {
    let free = infection_free(grid, params);
    let r0 = basic_reproduction_number(free.eta0, kernel);
    let endemic = solve_endemic_with(grid, params, kernel, opts)?;
    Ok(EquilibriumSet {
        s0: free.s0,
        eta0: free.eta0,
        r0,
        kernel_mass: kernel.mass(),
        endemic,
    })
}
