//! Domain types shared by every other module: the susceptibility classes,
//! demographic parameters, the sampled infectivity kernel and the tail
//! kernels used by the two Lyapunov functionals.
//!
//! Integrals over the susceptibility index are weighted sums over a finite
//! set of classes, so they carry no quadrature error.

use serde::{Deserialize, Serialize};

use crate::discretization::quad_trapezoid;
use crate::error::{ModelError, Result};

/// One susceptibility class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SusceptibilityClass {
    /// Measure of the class in the susceptibility space.
    pub weight: f64,
    /// Relative susceptibility.
    pub eta: f64,
    /// Recruitment rate per unit time.
    pub lambda: f64,
}

/// Finite weighted set of susceptibility classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGrid {
    classes: Vec<SusceptibilityClass>,
}

impl SigmaGrid {
    pub fn new(classes: Vec<SusceptibilityClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(ModelError::invalid("classes", "at least one class is required"));
        }
        for (j, c) in classes.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(ModelError::invalid(
                    format!("classes[{j}].weight"),
                    format!("must be finite and > 0, got {}", c.weight),
                ));
            }
            if !(c.lambda.is_finite() && c.lambda > 0.0) {
                return Err(ModelError::invalid(
                    format!("classes[{j}].lambda"),
                    format!("must be finite and > 0, got {}", c.lambda),
                ));
            }
            if !(c.eta.is_finite() && c.eta >= 0.0) {
                return Err(ModelError::invalid(
                    format!("classes[{j}].eta"),
                    format!("must be finite and >= 0, got {}", c.eta),
                ));
            }
        }
        if !classes.iter().any(|c| c.eta > 0.0) {
            return Err(ModelError::invalid(
                "classes",
                "at least one class must have eta > 0",
            ));
        }
        Ok(Self { classes })
    }

    /// Single class with unit weight.
    pub fn homogeneous(eta: f64, lambda: f64) -> Result<Self> {
        Self::new(vec![SusceptibilityClass {
            weight: 1.0,
            eta,
            lambda,
        }])
    }

    pub fn classes(&self) -> &[SusceptibilityClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// `Σ_j w_j f(j)`.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.classes
            .iter()
            .enumerate()
            .map(|(j, c)| c.weight * f(j))
            .sum()
    }

    /// `Σ_j w_j η_j x_j`, the susceptibility-weighted mass of a per-class vector.
    pub fn eta_mass(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.classes.len());
        self.classes
            .iter()
            .zip(x)
            .map(|(c, &v)| c.weight * c.eta * v)
            .sum()
    }

    /// Total recruitment `Σ_j w_j λ_j`.
    pub fn total_inflow(&self) -> f64 {
        self.integrate(|j| self.classes[j].lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-capita death rate.
    pub mu: f64,
}

impl ModelParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(ModelError::invalid("mu", format!("must be finite and > 0, got {mu}")));
        }
        Ok(Self { mu })
    }
}

/// Infectivity kernel sampled on the uniform grid `{kΔ : k = 0..K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectivityKernel {
    samples: Vec<f64>,
    delta: f64,
}

impl InfectivityKernel {
    /// An all-zero kernel is accepted: it describes the pure demographic
    /// model with `R0 = 0`.
    pub fn new(samples: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ModelError::invalid("delta", format!("must be finite and > 0, got {delta}")));
        }
        if samples.len() < 2 {
            return Err(ModelError::invalid(
                "kernel",
                format!("needs at least 2 samples, got {}", samples.len()),
            ));
        }
        if let Some((k, &a)) = samples
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
        {
            return Err(ModelError::invalid(
                format!("kernel sample {k}"),
                format!("must be finite and >= 0, got {a}"),
            ));
        }
        Ok(Self { samples, delta })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Index of the last grid node, `K`.
    pub fn k_max(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn tau_bar(&self) -> f64 {
        self.k_max() as f64 * self.delta
    }

    /// `∫₀^τ̄ A(τ) dτ` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        quad_trapezoid(&self.samples, self.delta)
    }
}

/// Tail kernels `ξ(τ) = η⁰ ∫_τ^τ̄ A` and `κ(τ) = η̄ ∫_τ^τ̄ A` on the kernel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovKernels {
    pub xi: Vec<f64>,
    pub kappa: Option<Vec<f64>>,
}

/// `g(x) = x - 1 - ln x`.
///
/// Arguments that are not strictly positive normal floats are rejected.
pub fn g(x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= f64::MIN_POSITIVE) {
        return Err(ModelError::Domain {
            what: "g(x) = x - 1 - ln x",
            value: x,
        });
    }
    let d = x - 1.0;
    if d.abs() < 1e-4 {
        // series of d - ln(1 + d); the ln_1p form loses relative accuracy here
        let d2 = d * d;
        Ok(d2 * (0.5 - d / 3.0 + d2 / 4.0 - d2 * d / 5.0))
    } else {
        Ok(d - d.ln_1p())
    }
}

/// Backward accumulation of trapezoid panels: `tail[K] = 0` exactly and
/// `tail[k] - tail[k+1]` is the panel `[kΔ, (k+1)Δ]`.
pub(crate) fn tail_integrals(kernel: &InfectivityKernel) -> Vec<f64> {
    let a = kernel.samples();
    let half = 0.5 * kernel.delta();
    let mut tail = vec![0.0; a.len()];
    for k in (0..a.len() - 1).rev() {
        tail[k] = tail[k + 1] + half * (a[k] + a[k + 1]);
    }
    tail
}

pub fn build_lyapunov_kernels(
    kernel: &InfectivityKernel,
    eta0: f64,
    etabar: Option<f64>,
) -> Result<LyapunovKernels> {
    if !(eta0.is_finite() && eta0 > 0.0) {
        return Err(ModelError::invalid("eta0", format!("must be > 0, got {eta0}")));
    }
    if let Some(eb) = etabar {
        if !(eb.is_finite() && eb > 0.0) {
            return Err(ModelError::invalid("etabar", format!("must be > 0, got {eb}")));
        }
    }
    let tail = tail_integrals(kernel);
    let xi = tail.iter().map(|t| eta0 * t).collect();
    let kappa = etabar.map(|eb| tail.iter().map(|t| eb * t).collect());
    Ok(LyapunovKernels { xi, kappa })
}
