//! Coagulation-kernel catalog: evaluation and structural validation.
//!
//! All kernels are symmetric nonnegative rates K(x, y). Evaluation routes
//! through a canonical (min, max) argument ordering so symmetry is bit-exact
//! by construction.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::report::Verdict;
use crate::sampling::PairSampler;
use crate::weights::{self, WeightSpec};

/// Exponential-growth kernels overflow past this size; configs must keep the
/// domain below it.
pub const EXP_KERNEL_CLAMP: f64 = 700.0;

/// Relative asymmetry above which a custom expression gets flagged at build.
pub const ASYMMETRY_WARN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum KernelVariant {
    /// K = c
    Constant(f64),
    /// K = x + y
    Sum,
    /// K = x y
    Product,
    /// K = x^a y^b + x^b y^a
    Homogeneous { alpha: f64, beta: f64 },
    /// K = x y + x + y
    ProductPlusSum,
    /// K = (x^2 - x y + y^2) / (x y + 1), quadratic growth on the axis
    PaperQuadratic,
    /// K = (e^x + e^y) / ((e^x - 1)(e^y - 1) + x + y + 1), exponential growth
    PaperExponential,
    /// K = max((lambda x y - mu (x+y+1)) / (b(x)+b(y)-b(x+y)), epsilon)
    Gelling { weight: Box<WeightSpec>, lambda: f64, mu: f64, epsilon: f64 },
    /// Symmetrized user expression 1/2 (f(x,y) + f(y,x))
    Custom(Expr),
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub label: String,
    /// Max relative asymmetry found when probing a custom expression; `None`
    /// for symmetric-by-formula variants.
    pub asymmetry: Option<f64>,
}

impl KernelSpec {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::InvalidParameters(format!("constant kernel needs c >= 0, got {c}")));
        }
        Ok(Self { variant: KernelVariant::Constant(c), label: format!("{c}"), asymmetry: None })
    }

    pub fn sum() -> Self {
        Self { variant: KernelVariant::Sum, label: "x+y".into(), asymmetry: None }
    }

    pub fn product() -> Self {
        Self { variant: KernelVariant::Product, label: "x*y".into(), asymmetry: None }
    }

    pub fn product_plus_sum() -> Self {
        Self { variant: KernelVariant::ProductPlusSum, label: "x*y+x+y".into(), asymmetry: None }
    }

    /// x^a y^b + x^b y^a with the standard exponent window [0, 1].
    pub fn homogeneous(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameters(format!(
                "homogeneous kernel needs 0 <= alpha, beta <= 1, got ({alpha}, {beta}); \
                 use homogeneous_wide to override"
            )));
        }
        Ok(Self::homogeneous_wide(alpha, beta))
    }

    /// Same family without the exponent window (explicit override).
    pub fn homogeneous_wide(alpha: f64, beta: f64) -> Self {
        Self {
            variant: KernelVariant::Homogeneous { alpha, beta },
            label: format!("x^{alpha}*y^{beta}+x^{beta}*y^{alpha}"),
            asymmetry: None,
        }
    }

    pub fn paper_quadratic() -> Self {
        Self {
            variant: KernelVariant::PaperQuadratic,
            label: "(x^2-x*y+y^2)/(x*y+1)".into(),
            asymmetry: None,
        }
    }

    pub fn paper_exponential() -> Self {
        Self {
            variant: KernelVariant::PaperExponential,
            label: "(e^x+e^y)/((e^x-1)*(e^y-1)+x+y+1)".into(),
            asymmetry: None,
        }
    }

    /// Parse, probe and symmetrize a custom kernel expression.
    pub fn custom(src: &str) -> Result<Self> {
        let expr = Expr::parse(src)?;
        let mut worst = 0.0f64;
        for (x, y) in PairSampler::new(1e-6, 1e6, 512, 0xC0A6).pairs() {
            let a = expr.eval(x, y);
            let b = expr.eval(y, x);
            if a.is_finite() && b.is_finite() {
                let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        Ok(Self {
            variant: KernelVariant::Custom(expr),
            label: src.to_string(),
            asymmetry: Some(worst),
        })
    }

    /// True when the probed asymmetry of a custom expression exceeds
    /// [`ASYMMETRY_WARN_TOL`]; callers surface this as a warning.
    pub fn asymmetry_flagged(&self) -> bool {
        self.asymmetry.map_or(false, |a| a > ASYMMETRY_WARN_TOL)
    }

    /// Evaluate K(x, y).
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if x < 0.0 || y < 0.0 {
            return Err(Error::InvalidParameters(format!(
                "kernel arguments must be nonnegative, got ({x}, {y})"
            )));
        }
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let v = match &self.variant {
            KernelVariant::Constant(c) => *c,
            KernelVariant::Sum => lo + hi,
            KernelVariant::Product => lo * hi,
            KernelVariant::Homogeneous { alpha, beta } => {
                lo.powf(*alpha) * hi.powf(*beta) + lo.powf(*beta) * hi.powf(*alpha)
            }
            KernelVariant::ProductPlusSum => lo * hi + lo + hi,
            KernelVariant::PaperQuadratic => (lo * lo - lo * hi + hi * hi) / (lo * hi + 1.0),
            KernelVariant::PaperExponential => {
                if hi > EXP_KERNEL_CLAMP {
                    return Err(Error::NonFiniteEvaluation {
                        context: format!("kernel {}", self.label),
                        x,
                        y,
                    });
                }
                let (el, eh) = (lo.exp(), hi.exp());
                (el + eh) / ((el - 1.0) * (eh - 1.0) + lo + hi + 1.0)
            }
            KernelVariant::Gelling { weight, lambda, mu, epsilon } => {
                let num = lambda * lo * hi - mu * (lo + hi + 1.0);
                if num <= 0.0 {
                    *epsilon
                } else {
                    let gap = weights::eval_weight(weight, lo)? + weights::eval_weight(weight, hi)?
                        - weights::eval_weight(weight, lo + hi)?;
                    // gap <= 0 is only reachable on the axes (or by rounding);
                    // the max rule floors those at epsilon
                    if gap <= 0.0 {
                        *epsilon
                    } else {
                        (num / gap).max(*epsilon)
                    }
                }
            }
            KernelVariant::Custom(e) => 0.5 * (e.eval(lo, hi) + e.eval(hi, lo)),
        };
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation { context: format!("kernel {}", self.label), x, y })
        }
    }
}

/// Build the gelation-forcing kernel
/// K(x,y) = max((lambda x y - mu (x+y+1)) / (b(x)+b(y)-b(x+y)), epsilon).
///
/// The weight must be nonnegative, nondecreasing and strictly subadditive on
/// the open half-line; those properties are verified on a deterministic
/// sample and rejected with [`Error::InvalidWeight`] otherwise.
pub fn gelling_kernel(b: &WeightSpec, lambda: f64, mu: f64, epsilon: f64) -> Result<KernelSpec> {
    if !(lambda > 0.0) || !(mu >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "gelling kernel needs lambda > 0, mu >= 0, epsilon > 0; got ({lambda}, {mu}, {epsilon})"
        )));
    }
    let sampler = PairSampler::new(1e-6, 1e3, 20_000, 0x6E11).with_rays();
    let strict = weights::check_subadditive(b, &sampler, true)?;
    if strict.verdict != Verdict::HoldsOnSample {
        return Err(Error::InvalidWeight {
            label: b.label.clone(),
            reason: format!(
                "not strictly subadditive on sample (min margin {:e})",
                strict.constant("min_margin").unwrap_or(f64::NAN)
            ),
        });
    }
    let mono = weights::check_nondecreasing(b, &sampler)?;
    if mono.verdict != Verdict::HoldsOnSample {
        return Err(Error::InvalidWeight {
            label: b.label.clone(),
            reason: "not nondecreasing on sample".into(),
        });
    }
    for (x, _) in sampler.pairs().take(1000) {
        if weights::eval_weight(b, x)? < 0.0 {
            return Err(Error::InvalidWeight {
                label: b.label.clone(),
                reason: format!("negative at x = {x}"),
            });
        }
    }
    Ok(KernelSpec {
        variant: KernelVariant::Gelling {
            weight: Box::new(b.clone()),
            lambda,
            mu,
            epsilon,
        },
        label: format!("gelling[{}; l={lambda}, m={mu}, e={epsilon}]", b.label),
        asymmetry: None,
    })
}

/// Tail growth diagnostic along y = kx: returns (x, K(x, kx) / (x (log x)^2))
/// for each x. For the log-quotient gelling kernel with mu = 0 the ratios
/// approach [`log_quotient_ratio_limit`]; for faster kernels they diverge and
/// for bounded kernels they vanish.
pub fn growth_ratio(k: &KernelSpec, slope: f64, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(slope > 0.0) {
        return Err(Error::InvalidParameters(format!("growth ratio needs slope > 0, got {slope}")));
    }
    let e = std::f64::consts::E;
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs.first().is_some_and(|&x| x <= e) {
        return Err(Error::InvalidParameters(
            "growth ratio needs a strictly increasing sequence with all x > e".into(),
        ));
    }
    xs.iter()
        .map(|&x| {
            let l = x.ln();
            Ok((x, k.eval(x, slope * x)? / (x * l * l)))
        })
        .collect()
}

/// Predicted tail ratio lambda k / ((k+1) log(k+1) - k log k) for the
/// log-quotient gelling kernel along y = kx.
pub fn log_quotient_ratio_limit(lambda: f64, slope: f64) -> f64 {
    let h = (slope + 1.0) * (slope + 1.0).ln() - slope * slope.ln();
    lambda * slope / h
}
