//! Cascade reports in JSON and plain text.

use std::fmt::Write as _;

use serde::Serialize;
use strain_cascade_core::cascade::ReductionCoefficients;
use strain_cascade_core::singlepatch::r0_cascade;
use strain_cascade_core::{CascadeReport, EquilibriumPoint, ModelParameters, StrainVerdict};

/// Relative tolerance for the single-patch agreement check.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEntry {
    pub strain: usize,
    /// `s(M_k)`.
    pub threshold: f64,
    pub persists: bool,
    pub near_threshold: bool,
    pub weak_persistence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproductionNumber {
    pub strain: usize,
    pub r0: f64,
}

/// Comparison of the cascade with the reproduction-number computation at a
/// single patch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinglePatchCheck {
    /// In elimination order, strain `n` first.
    pub reproduction_numbers: Vec<ReproductionNumber>,
    pub same_persistence_set: bool,
    pub signs_agree: bool,
    pub max_difference: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdsReport {
    pub patches: usize,
    pub strains: usize,
    /// Strain `n` first.
    pub thresholds: Vec<ThresholdEntry>,
    pub persistence_set: Vec<usize>,
    pub disease_free: bool,
    pub equilibrium: EquilibriumPoint,
    pub coefficients: Vec<ReductionCoefficients>,
    pub verdicts: Vec<StrainVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_patch: Option<SinglePatchCheck>,
}

impl ThresholdsReport {
    pub fn new(params: &ModelParameters, report: &CascadeReport) -> Self {
        let thresholds = report
            .verdicts
            .iter()
            .map(|v| ThresholdEntry {
                strain: v.strain,
                threshold: v.threshold,
                persists: v.persists,
                near_threshold: v.near_threshold,
                weak_persistence: v.weak_persistence,
            })
            .collect();
        let single_patch = (params.patches == 1)
            .then(|| r0_cascade(params).ok())
            .flatten()
            .map(|oracle| {
                let n = params.strains;
                let a = report.equilibrium.to_values();
                let b = oracle.equilibrium.to_values();
                let scale = b.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
                let max_difference = a
                    .iter()
                    .zip(&b)
                    .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
                let same_persistence_set = report.persistence_set() == oracle.persistence_set();
                let signs_agree = (1..=n).all(|k| {
                    report.verdict(k).map(|v| v.threshold > 0.0) == Some(oracle.r0.for_strain(k) > 1.0)
                });
                SinglePatchCheck {
                    reproduction_numbers: (1..=n)
                        .rev()
                        .map(|k| ReproductionNumber {
                            strain: k,
                            r0: oracle.r0.for_strain(k),
                        })
                        .collect(),
                    same_persistence_set,
                    signs_agree,
                    max_difference,
                    agrees: same_persistence_set
                        && signs_agree
                        && max_difference <= AGREEMENT_TOL * scale,
                }
            });
        Self {
            patches: params.patches,
            strains: params.strains,
            thresholds,
            persistence_set: report.persistence_set(),
            disease_free: report.equilibrium.is_disease_free(),
            equilibrium: report.equilibrium.clone(),
            coefficients: report.coefficients.clone(),
            verdicts: report.verdicts.clone(),
            single_patch,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "strain cascade report");
        let _ = writeln!(out, "patches: {}  strains: {}", self.patches, self.strains);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>6}  {:>24}  verdict", "strain", "s(M_k)");
        for t in &self.thresholds {
            let mut verdict = String::from(if t.persists { "persists" } else { "dies out" });
            if t.near_threshold {
                verdict.push_str(" (near threshold)");
            }
            if t.weak_persistence {
                verdict.push_str(" (weak persistence)");
            }
            let _ = writeln!(out, "{:>6}  {:>24e}  {}", t.strain, t.threshold, verdict);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "persistence set: {}", format_set(&self.persistence_set));
        if self.disease_free {
            let _ = writeln!(out, "outcome: disease-free");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "equilibrium:");
        for (l, s) in self.equilibrium.susceptible.iter().enumerate() {
            let _ = writeln!(
                out,
                "  patch {}: S = {s:e}, T = {}",
                l + 1,
                format_list(&self.equilibrium.infected[l])
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "reduction coefficients (birth; death) per step:");
        for c in &self.coefficients {
            let _ = writeln!(
                out,
                "  step {}: {}; {}",
                c.step,
                format_list(&c.birth),
                format_list(&c.death)
            );
        }
        if let Some(sp) = &self.single_patch {
            let _ = writeln!(out);
            let _ = writeln!(out, "single-patch reproduction numbers:");
            for r in &sp.reproduction_numbers {
                let _ = writeln!(out, "  R0({}) = {:e}", r.strain, r.r0);
            }
            let _ = writeln!(
                out,
                "agreement with cascade: {} (max difference {:e})",
                if sp.agrees { "yes" } else { "NO" },
                sp.max_difference
            );
        }
        out
    }
}

/// `{1,3}` style rendering of a one-based strain set.
pub fn format_set(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

fn format_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|x| format!("{x:e}")).collect();
    format!("[{}]", items.join(", "))
}
