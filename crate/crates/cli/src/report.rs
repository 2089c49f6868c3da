//! JSON summary written next to every run.

use serde::Serialize;

use renewal_core::equilibria::EquilibriumSet;
use renewal_core::lyapunov::MonitorReport;
use renewal_core::simulator::Classification;
use renewal_core::verification::OracleReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    P0,
    Pbar,
    #[serde(rename = "none")]
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::P0 => "P0",
            Verdict::Pbar => "Pbar",
            Verdict::Undecided => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryReport {
    pub command: &'static str,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub equilibria: EquilibriaBlock,
    pub grid: GridBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracles: Vec<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certification: Option<CertificationBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriaBlock {
    #[serde(rename = "S0")]
    pub s0: Vec<f64>,
    pub eta0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endemic: Option<EndemicBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndemicBlock {
    #[serde(rename = "Fbar")]
    pub fbar: f64,
    #[serde(rename = "Sbar")]
    pub sbar: Vec<f64>,
    pub etabar: f64,
    pub vbar: Vec<f64>,
}

impl From<&EquilibriumSet> for EquilibriaBlock {
    fn from(eq: &EquilibriumSet) -> Self {
        Self {
            s0: eq.s0.clone(),
            eta0: eq.eta0,
            endemic: eq.endemic.as_ref().map(|e| EndemicBlock {
                fbar: e.fbar,
                sbar: e.sbar.clone(),
                etabar: e.etabar,
                vbar: e.vbar.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridBlock {
    pub dt: f64,
    pub k_max: usize,
    pub tau_bar: f64,
    pub kernel_mass: f64,
    pub corrector: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceBlock {
    pub t_end: f64,
    #[serde(rename = "F_end")]
    pub f_end: f64,
    #[serde(rename = "S_end")]
    pub s_end: Vec<f64>,
    /// `max(F, max_j |S_j - S⁰_j| / S⁰_j)`.
    #[serde(rename = "distance_to_P0")]
    pub distance_to_p0: f64,
    /// `max(|F - F̄| / F̄, max_j |S_j - S̄_j| / S̄_j)`.
    #[serde(rename = "distance_to_Pbar", skip_serializing_if = "Option::is_none")]
    pub distance_to_pbar: Option<f64>,
    pub tolerance: f64,
    pub converged_to: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorBlock {
    #[serde(flatten)]
    pub report: MonitorReport,
    pub u_certified: bool,
    pub w_certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationBlock {
    pub certified: bool,
    pub expected: Verdict,
    pub failures: Vec<String>,
}
