//! Weight-function catalog b(x) and sampled structural checks.
//!
//! Weights carry *claimed* structural tags; the checks here produce sampled
//! evidence (with witnesses), never proofs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::report::{ConditionId, ConditionReport, Verdict};
use crate::sampling::PairSampler;

/// Exponential weights overflow f64 near x = 745; clamp a bit below.
pub const EXP_WEIGHT_CLAMP: f64 = 700.0;

/// Strictness / rounding tolerance for sampled inequality margins.
pub const MARGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTag {
    Nonnegative,
    Nondecreasing,
    Subadditive,
    Superadditive,
    StrictlySubadditive,
    Concave,
    Convex,
}

#[derive(Debug, Clone)]
pub enum WeightVariant {
    /// b(x) = 1
    One,
    /// b(x) = x
    Identity,
    /// b(x) = x^p, p >= 0
    Power(f64),
    /// b(x) = x^(beta+1)
    PowerPlusOne(f64),
    /// b(x) = e^x, clamped domain
    Exponential,
    /// b(x) = x / log(x + 2), b(0) = 0
    LogQuotient,
    Custom(Expr),
}

#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub variant: WeightVariant,
    pub claimed_tags: BTreeSet<WeightTag>,
    pub label: String,
}

fn tags(list: &[WeightTag]) -> BTreeSet<WeightTag> {
    list.iter().copied().collect()
}

impl WeightSpec {
    pub fn one() -> Self {
        use WeightTag::*;
        Self {
            variant: WeightVariant::One,
            claimed_tags: tags(&[Nonnegative, Nondecreasing, Subadditive, Concave]),
            label: "one".into(),
        }
    }

    pub fn identity() -> Self {
        use WeightTag::*;
        Self {
            variant: WeightVariant::Identity,
            claimed_tags: tags(&[
                Nonnegative,
                Nondecreasing,
                Subadditive,
                Superadditive,
                Concave,
                Convex,
            ]),
            label: "x".into(),
        }
    }

    pub fn power(p: f64) -> Result<Self> {
        use WeightTag::*;
        if !(p >= 0.0) {
            return Err(Error::InvalidParameters(format!("power weight needs p >= 0, got {p}")));
        }
        let claimed = if p == 0.0 || p == 1.0 {
            if p == 0.0 {
                tags(&[Nonnegative, Nondecreasing, Subadditive, Concave])
            } else {
                tags(&[Nonnegative, Nondecreasing, Subadditive, Superadditive, Concave, Convex])
            }
        } else if p < 1.0 {
            tags(&[Nonnegative, Nondecreasing, Subadditive, StrictlySubadditive, Concave])
        } else {
            tags(&[Nonnegative, Nondecreasing, Superadditive, Convex])
        };
        Ok(Self { variant: WeightVariant::Power(p), claimed_tags: claimed, label: format!("x^{p}") })
    }

    /// The b(x) = x^(beta+1) family used with homogeneous kernels.
    pub fn power_plus_one(beta: f64) -> Result<Self> {
        if !(beta >= -1.0) {
            return Err(Error::InvalidParameters(format!(
                "power-plus-one weight needs beta >= -1, got {beta}"
            )));
        }
        let base = Self::power(beta + 1.0)?;
        Ok(Self {
            variant: WeightVariant::PowerPlusOne(beta),
            claimed_tags: base.claimed_tags,
            label: format!("x^{}", beta + 1.0),
        })
    }

    pub fn exponential() -> Self {
        use WeightTag::*;
        Self {
            variant: WeightVariant::Exponential,
            claimed_tags: tags(&[Nonnegative, Nondecreasing, Convex]),
            label: "e^x".into(),
        }
    }

    pub fn log_quotient() -> Self {
        use WeightTag::*;
        Self {
            variant: WeightVariant::LogQuotient,
            claimed_tags: tags(&[
                Nonnegative,
                Nondecreasing,
                Subadditive,
                StrictlySubadditive,
                Concave,
            ]),
            label: "x/log(x+2)".into(),
        }
    }

    pub fn custom(src: &str, claimed: &[WeightTag]) -> Result<Self> {
        let expr = Expr::parse(src)?;
        if !expr.is_univariate() {
            return Err(Error::Expr(format!("weight expression must not use y: `{src}`")));
        }
        Ok(Self {
            variant: WeightVariant::Custom(expr),
            claimed_tags: tags(claimed),
            label: src.to_string(),
        })
    }

    pub fn claims(&self, tag: WeightTag) -> bool {
        self.claimed_tags.contains(&tag)
    }
}

/// Evaluate b(x). Errors with [`Error::NonFiniteEvaluation`] outside the
/// finite range (exponential weight beyond its clamp, bad custom exprs).
pub fn eval_weight(b: &WeightSpec, x: f64) -> Result<f64> {
    let v = match &b.variant {
        WeightVariant::One => 1.0,
        WeightVariant::Identity => x,
        WeightVariant::Power(p) => x.powf(*p),
        WeightVariant::PowerPlusOne(beta) => x.powf(beta + 1.0),
        WeightVariant::Exponential => {
            if x > EXP_WEIGHT_CLAMP {
                return Err(Error::NonFiniteEvaluation {
                    context: format!("weight {}", b.label),
                    x,
                    y: 0.0,
                });
            }
            x.exp()
        }
        WeightVariant::LogQuotient => {
            if x == 0.0 {
                0.0
            } else {
                x / (x + 2.0).ln()
            }
        }
        WeightVariant::Custom(e) => e.eval(x, 0.0),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation { context: format!("weight {}", b.label), x, y: 0.0 })
    }
}

/// Sampled subadditivity check: b(x) + b(y) - b(x+y) >= 0 on every pair.
///
/// With `strict` the margin must exceed [`MARGIN_TOL`] on the open quadrant;
/// callers should sample away from the boundary where strictness fails by
/// continuity.
pub fn check_subadditive(
    b: &WeightSpec,
    sampler: &PairSampler,
    strict: bool,
) -> Result<ConditionReport> {
    let mut worst = f64::INFINITY;
    let mut witness = (0.0, 0.0);
    for (x, y) in sampler.pairs() {
        let margin = eval_weight(b, x)? + eval_weight(b, y)? - eval_weight(b, x + y)?;
        if margin < worst {
            worst = margin;
            witness = (x, y);
        }
    }
    let holds = if strict { worst > MARGIN_TOL } else { worst >= -MARGIN_TOL };
    let id = if strict { ConditionId::StrictlySubadditive } else { ConditionId::Subadditive };
    let verdict = if holds { Verdict::HoldsOnSample } else { Verdict::Violated };
    Ok(ConditionReport::new(id, verdict)
        .with_constant("min_margin", worst)
        .with_witness(witness.0, witness.1, worst)
        .with_sample(sampler.descriptor()))
}

/// Sampled monotonicity check: b nondecreasing on every ordered sampled pair.
pub fn check_nondecreasing(b: &WeightSpec, sampler: &PairSampler) -> Result<ConditionReport> {
    let mut worst = f64::INFINITY;
    let mut witness = (0.0, 0.0);
    for (x, y) in sampler.pairs() {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let margin = eval_weight(b, hi)? - eval_weight(b, lo)?;
        if margin < worst {
            worst = margin;
            witness = (lo, hi);
        }
    }
    let verdict = if worst >= -MARGIN_TOL { Verdict::HoldsOnSample } else { Verdict::Violated };
    Ok(ConditionReport::new(ConditionId::Nondecreasing, verdict)
        .with_constant("min_margin", worst)
        .with_witness(witness.0, witness.1, worst)
        .with_sample(sampler.descriptor()))
}

/// Consistency check of the concave-implies-subadditive property: run a
/// sampled midpoint-concavity test (plus b(0) >= 0), then confirm
/// subadditivity on the same sample.
pub fn check_concavity_implies_subadditive(
    b: &WeightSpec,
    sampler: &PairSampler,
) -> Result<ConditionReport> {
    let b0 = eval_weight(b, 0.0)?;
    if b0 < 0.0 {
        return Err(Error::ConcavityNotDetected(format!("{} has b(0) = {b0} < 0", b.label)));
    }
    for (x, y) in sampler.pairs() {
        let mid = eval_weight(b, 0.5 * (x + y))?;
        let avg = 0.5 * (eval_weight(b, x)? + eval_weight(b, y)?);
        let scale = 1.0 + mid.abs().max(avg.abs());
        if mid - avg < -MARGIN_TOL * scale {
            return Err(Error::ConcavityNotDetected(format!(
                "{} fails midpoint concavity at ({x}, {y})",
                b.label
            )));
        }
    }
    let inner = check_subadditive(b, sampler, false)?;
    Ok(ConditionReport { id: ConditionId::ConcaveSubadditive, ..inner })
}
