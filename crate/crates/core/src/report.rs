//! Sampled-check reports: verdicts, fitted constants, witnesses.

use serde::{Deserialize, Serialize};

use crate::sampling::SampleDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    A1,
    A2,
    A3,
    KernelFloor,
    Subadditive,
    StrictlySubadditive,
    ConcaveSubadditive,
    Nondecreasing,
    Monotonicity,
    LBound,
    M0Decay,
    MassBalance,
    TmiFluxAgreement,
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConditionId::A1 => "A1",
            ConditionId::A2 => "A2",
            ConditionId::A3 => "A3",
            ConditionId::KernelFloor => "Kr",
            ConditionId::Subadditive => "subadditive",
            ConditionId::StrictlySubadditive => "strictly_subadditive",
            ConditionId::ConcaveSubadditive => "concave_subadditive",
            ConditionId::Nondecreasing => "nondecreasing",
            ConditionId::Monotonicity => "monotonicity",
            ConditionId::LBound => "l_bound",
            ConditionId::M0Decay => "m0_decay",
            ConditionId::MassBalance => "mass_balance",
            ConditionId::TmiFluxAgreement => "tmi_flux_agreement",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    HoldsOnSample,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::HoldsOnSample => "HOLDS_ON_SAMPLE",
            Verdict::Violated => "VIOLATED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

/// Worst-case point of a sampled inequality. For trajectory checks the
/// coordinates are (t, value) instead of (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: f64,
    pub y: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub verdict: Verdict,
    /// Named fitted constants (sample suprema/infima of the defining ratios).
    pub constants: Vec<(String, f64)>,
    pub witness: Option<Witness>,
    pub sample: Option<SampleDescriptor>,
    pub note: Option<String>,
}

impl ConditionReport {
    pub fn new(id: ConditionId, verdict: Verdict) -> Self {
        Self { id, verdict, constants: Vec::new(), witness: None, sample: None, note: None }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.push((name.to_string(), value));
        self
    }

    pub fn with_witness(mut self, x: f64, y: f64, margin: f64) -> Self {
        self.witness = Some(Witness { x, y, margin });
        self
    }

    pub fn with_sample(mut self, sample: SampleDescriptor) -> Self {
        self.sample = Some(sample);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::HoldsOnSample
    }
}
