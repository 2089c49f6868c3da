//! Independent oracles: aggregation of the homogeneous model, closed-form
//! endemic equilibria for one and two classes, and grid-refinement studies.
//!
//! Oracles reach into the code under test only through the single entry
//! point they check; closed forms and aggregation identities are coded here.

use serde::Serialize;

use crate::batch;
use crate::discretization::{quad_trapezoid, sample_kernel, GridSpec, KernelFamily};
use crate::equilibria::solve_endemic;
use crate::error::{ModelError, Result};
use crate::model::{InfectivityKernel, ModelParams, SigmaGrid};
use crate::simulator::{simulate, steps_to, InitialCondition, InitialProfile, RenewalModel};

pub const REDUCTION_TOL: f64 = 1e-10;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const REQUIRED_ORDER: f64 = 1.9;
/// Errors at or below this level count as exact.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_err: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required_order: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub level_errors: Vec<f64>,
    pub pass: bool,
}

impl OracleReport {
    fn tolerance_check(name: &str, max_abs_err: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_abs_err,
            tolerance,
            observed_order: None,
            required_order: None,
            level_errors: Vec::new(),
            pass: max_abs_err <= tolerance,
        }
    }
}

/// Runs the stratified model with all `η_j = 1` next to a one-class model
/// with `λ = Σ_j w_j λ_j` and history `Σ_j w_j S_j`, and compares `F` and the
/// aggregated susceptibles step by step.
pub fn homogeneous_reduction_check(
    model: &RenewalModel,
    ic: &InitialCondition,
    t_end: f64,
) -> Result<OracleReport> {
    let classes = model.grid.classes();
    if let Some(j) = classes.iter().position(|c| c.eta != 1.0) {
        return Err(ModelError::invalid(
            format!("classes[{j}].eta"),
            "homogeneous reduction needs eta = 1 in every class",
        ));
    }
    let lambda: f64 = classes.iter().map(|c| c.weight * c.lambda).sum();
    let aggregate = RenewalModel {
        grid: SigmaGrid::homogeneous(1.0, lambda)?,
        params: model.params,
        kernel: model.kernel.clone(),
        corrector: model.corrector,
    };
    let aggregate_sum = |s: &[f64]| -> f64 { classes.iter().zip(s).map(|(c, v)| c.weight * v).sum() };
    let s_agg: Vec<f64> = (0..ic.slots()).map(|k| aggregate_sum(ic.s(k))).collect();
    let f_agg: Vec<f64> = (0..ic.slots()).map(|k| ic.f(k)).collect();
    let ic_agg = InitialCondition::from_samples(1, s_agg, f_agg)?;

    let full = simulate(ic, model, t_end, &mut [])?;
    let reduced = simulate(&ic_agg, &aggregate, t_end, &mut [])?;
    let mut err: f64 = 0.0;
    for n in 0..full.len() {
        err = err.max((full.force[n] - reduced.force[n]).abs());
        err = err.max((aggregate_sum(&full.susceptibles[n]) - reduced.susceptibles[n][0]).abs());
    }
    Ok(OracleReport::tolerance_check("homogeneous_reduction", err, REDUCTION_TOL))
}

/// Endemic force of infection from the closed forms, or `None` when
/// `R0 <= 1`. One class: `F̄ = (w η λ ∫A - μ) / η`. Two classes: positive
/// root of the quadratic obtained by clearing denominators in
/// `Σ_j a_j / (μ + η_j F) = 1`, `a_j = w_j η_j λ_j ∫A`.
pub fn closed_form_fbar(grid: &SigmaGrid, params: &ModelParams, mass: f64) -> Result<Option<f64>> {
    let mu = params.mu;
    let terms: Vec<(f64, f64)> = grid
        .classes()
        .iter()
        .map(|c| (c.weight * c.eta * c.lambda * mass, c.eta))
        .collect();
    let r0 = terms.iter().map(|(a, _)| a).sum::<f64>() / mu;
    if r0 <= 1.0 {
        return Ok(None);
    }
    match terms[..] {
        [(a, eta)] => Ok(Some((a - mu) / eta)),
        [(a1, e1), (a2, e2)] => {
            let qa = e1 * e2;
            let qb = mu * (e1 + e2) - a1 * e2 - a2 * e1;
            let qc = mu * mu - mu * (a1 + a2);
            if qa == 0.0 {
                return Ok(Some(-qc / qb));
            }
            let disc = (qb * qb - 4.0 * qa * qc).sqrt();
            let q = -0.5 * (qb + qb.signum() * disc);
            Ok(Some((q / qa).max(qc / q)))
        }
        _ => Err(ModelError::invalid(
            "classes",
            format!("closed form needs 1 or 2 classes, got {}", terms.len()),
        )),
    }
}

pub fn closed_form_equilibrium_check(
    grid: &SigmaGrid,
    params: &ModelParams,
    kernel: &InfectivityKernel,
) -> Result<OracleReport> {
    let mass = quad_trapezoid(kernel.samples(), kernel.delta());
    let expected = closed_form_fbar(grid, params, mass)?;
    let got = solve_endemic(grid, params, kernel)?.map(|e| e.fbar);
    let err = match (expected, got) {
        (None, None) => 0.0,
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    Ok(OracleReport::tolerance_check("closed_form_equilibrium", err, CLOSED_FORM_TOL))
}

/// Scenario rebuilt from scratch at every refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementScenario {
    pub grid: SigmaGrid,
    pub params: ModelParams,
    pub family: KernelFamily,
    pub profile: InitialProfile,
    pub t_end: f64,
    pub corrector: bool,
}

impl RefinementScenario {
    /// Final `(F, S)` at `t_end` with step `delta`.
    pub fn final_state(&self, delta: f64) -> Result<(f64, Vec<f64>)> {
        let kernel = sample_kernel(&self.family, GridSpec::new(delta)?)?;
        let model = RenewalModel::new(self.grid.clone(), self.params, kernel).with_corrector(self.corrector);
        let free = crate::equilibria::infection_free(&model.grid, &model.params);
        let ic = self.profile.realize(&model, &free)?;
        let rec = simulate(&ic, &model, self.t_end, &mut [])?;
        let s = rec.final_state.s_now().to_vec();
        Ok((rec.final_state.f_now(), s))
    }
}

/// Errors at `t_end` for steps `Δ, Δ/2, .., Δ/2^(levels-2)` against the
/// `Δ/2^(levels-1)` solution; the observed order is the smallest `log₂` ratio
/// of consecutive errors.
pub fn refinement_study(scenario: &RefinementScenario, base_delta: f64, levels: usize) -> Result<OracleReport> {
    if levels < 3 {
        return Err(ModelError::invalid("levels", "a refinement study needs at least 3 levels"));
    }
    let deltas: Vec<f64> = (0..levels).map(|i| base_delta / f64::powi(2.0, i as i32)).collect();
    let n0 = steps_to(scenario.t_end, base_delta);
    if ((n0 as f64) * base_delta - scenario.t_end).abs() > 1e-9 * scenario.t_end {
        return Err(ModelError::invalid("t_end", "must be a multiple of the coarsest step"));
    }
    let finals = batch::map(&deltas, |&d| scenario.final_state(d))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (f_ref, s_ref) = finals.last().expect("levels >= 3");
    let errors: Vec<f64> = finals[..levels - 1]
        .iter()
        .map(|(f, s)| {
            s.iter()
                .zip(s_ref)
                .map(|(a, b)| (a - b).abs())
                .fold((f - f_ref).abs(), f64::max)
        })
        .collect();
    let max_err = errors.iter().cloned().fold(0.0, f64::max);
    let order = errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    let exact = max_err <= ROUNDING_FLOOR;
    Ok(OracleReport {
        name: "refinement_study".to_string(),
        max_abs_err: max_err,
        tolerance: ROUNDING_FLOOR,
        observed_order: (!exact).then_some(order),
        required_order: Some(REQUIRED_ORDER),
        level_errors: errors,
        pass: exact || order >= REQUIRED_ORDER,
    })
}
