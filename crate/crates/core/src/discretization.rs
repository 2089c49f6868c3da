//! Kernel families, grid alignment and the trapezoid rule.
//!
//! One step `Δ` is shared by the infection-age axis and the time axis, so the
//! renewal convolution is a weighted dot product over history slots.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ModelError, Result};
use crate::model::InfectivityKernel;

/// Analytic or tabulated infectivity profile `A(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    /// `A(τ) = height` on `[0, width]`.
    Boxcar { height: f64, width: f64 },
    /// `A(τ) = beta · exp(-gamma τ)` on `[0, cutoff]`.
    TruncatedExponential { beta: f64, gamma: f64, cutoff: f64 },
    /// `amplitude` times the gamma density with the given scale and shape,
    /// truncated at `cutoff`.
    TruncatedGamma {
        scale: f64,
        shape: f64,
        cutoff: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// Piecewise-linear interpolation through `(τ, A)` points; zero past the
    /// last point.
    Table { points: Vec<[f64; 2]> },
}

fn unit() -> f64 {
    1.0
}

fn check(name: &str, v: f64, strictly_positive: bool) -> Result<()> {
    let ok = v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        let bound = if strictly_positive { "> 0" } else { ">= 0" };
        Err(ModelError::invalid(name, format!("must be finite and {bound}, got {v}")))
    }
}

impl KernelFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::Boxcar { height, width } => {
                check("height", height, false)?;
                check("width", width, true)
            }
            KernelFamily::TruncatedExponential { beta, gamma, cutoff } => {
                check("beta", beta, false)?;
                check("gamma", gamma, false)?;
                check("cutoff", cutoff, true)
            }
            KernelFamily::TruncatedGamma {
                scale,
                shape,
                cutoff,
                amplitude,
            } => {
                check("scale", scale, true)?;
                check("shape", shape, true)?;
                check("cutoff", cutoff, true)?;
                check("amplitude", amplitude, false)?;
                if shape < 1.0 {
                    return Err(ModelError::invalid(
                        "shape",
                        format!("must be >= 1 so that A(0) is finite, got {shape}"),
                    ));
                }
                Ok(())
            }
            KernelFamily::Table { ref points } => {
                if points.len() < 2 {
                    return Err(ModelError::invalid("points", "a table needs at least 2 points"));
                }
                if points[0][0] != 0.0 {
                    return Err(ModelError::invalid(
                        "points[0]",
                        format!("first tau must be 0, got {}", points[0][0]),
                    ));
                }
                for (i, p) in points.iter().enumerate() {
                    check(&format!("points[{i}].tau"), p[0], false)?;
                    check(&format!("points[{i}].value"), p[1], false)?;
                    if i > 0 && p[0] <= points[i - 1][0] {
                        return Err(ModelError::invalid(
                            format!("points[{i}].tau"),
                            "tau values must be strictly increasing",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Right end of the family's natural support.
    pub fn extent(&self) -> f64 {
        match *self {
            KernelFamily::Boxcar { width, .. } => width,
            KernelFamily::TruncatedExponential { cutoff, .. } => cutoff,
            KernelFamily::TruncatedGamma { cutoff, .. } => cutoff,
            KernelFamily::Table { ref points } => points[points.len() - 1][0],
        }
    }

    /// `A(τ)` for `0 <= τ <= extent`; zero beyond.
    pub fn evaluate(&self, tau: f64) -> f64 {
        if tau > self.extent() {
            return 0.0;
        }
        match *self {
            KernelFamily::Boxcar { height, .. } => height,
            KernelFamily::TruncatedExponential { beta, gamma, .. } => beta * (-gamma * tau).exp(),
            KernelFamily::TruncatedGamma {
                scale,
                shape,
                amplitude,
                ..
            } => {
                if tau == 0.0 {
                    return if shape == 1.0 { amplitude / scale } else { 0.0 };
                }
                let log_density = (shape - 1.0) * tau.ln()
                    - tau / scale
                    - ln_gamma(shape)
                    - shape * scale.ln();
                amplitude * log_density.exp()
            }
            KernelFamily::Table { ref points } => {
                let i = points.partition_point(|p| p[0] <= tau);
                if i == 0 {
                    return points[0][1];
                }
                if i == points.len() {
                    return points[i - 1][1];
                }
                let [t0, a0] = points[i - 1];
                let [t1, a1] = points[i];
                a0 + (a1 - a0) * (tau - t0) / (t1 - t0)
            }
        }
    }
}

/// Step size of the shared τ / time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    delta: f64,
}

impl GridSpec {
    pub fn new(delta: f64) -> Result<Self> {
        check("delta", delta, true)?;
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of steps covering `[0, extent]`, rounding up to the next grid
    /// node unless `extent` already sits on one (up to rounding).
    pub fn steps_covering(&self, extent: f64) -> usize {
        let r = extent / self.delta;
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            r.ceil() as usize
        }
    }
}

/// Samples `family` at `kΔ`, zero-padding the support up to a grid node.
pub fn sample_kernel(family: &KernelFamily, grid: GridSpec) -> Result<InfectivityKernel> {
    family.validate()?;
    let extent = family.extent();
    let k_max = grid.steps_covering(extent).max(1);
    let delta = grid.delta();
    let samples = (0..=k_max)
        .map(|k| {
            let tau = k as f64 * delta;
            // the aligned last node is the support end itself
            let tau = if (tau - extent).abs() <= 1e-9 * extent { extent } else { tau };
            family.evaluate(tau)
        })
        .collect::<Vec<_>>();
    if let Some(k) = samples.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(ModelError::invalid(
            format!("kernel sample {k}"),
            format!("family produced {}", samples[k]),
        ));
    }
    InfectivityKernel::new(samples, delta)
}

/// Discrete support: `(1 + last k with A_k > 0)·Δ`, capped at `KΔ`; zero for
/// an all-zero kernel.
pub fn kernel_support(kernel: &InfectivityKernel) -> f64 {
    match kernel.samples().iter().rposition(|&a| a > 0.0) {
        None => 0.0,
        Some(k) => ((k + 1).min(kernel.k_max())) as f64 * kernel.delta(),
    }
}

/// Trapezoid weight of node `k` on a grid with last index `k_max`.
#[inline]
pub fn trapezoid_weight(k: usize, k_max: usize, delta: f64) -> f64 {
    if k == 0 || k == k_max {
        0.5 * delta
    } else {
        delta
    }
}

/// Composite trapezoid rule over uniformly spaced samples.
pub fn quad_trapezoid(samples: &[f64], delta: f64) -> f64 {
    match samples {
        [] | [_] => 0.0,
        [first, inner @ .., last] => delta * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}
