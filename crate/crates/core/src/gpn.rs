//! Gaussian-Poincaré normalization.
//!
//! An activation `phi` is Gaussian-Poincaré normalized (GPN) when
//! `E[phi(x)^2] = E[phi'(x)^2] = 1` for `x ~ N(0, 1)`. Any activation with
//! finite, non-zero second moments becomes GPN under an affine map
//! `a * phi + b`: the derivative condition fixes `a = E[phi'^2]^(-1/2)`, and
//! writing `b = a * c` the value condition reduces to
//!
//! ```text
//! psi(c) = Var[phi] + (E[phi] + c)^2 - E[phi'^2] = 0
//! ```
//!
//! whose roots are `c = -E[phi] ± sqrt(E[phi'^2] - Var[phi])`. The
//! Gaussian-Poincaré inequality `Var[phi] <= E[phi'^2]` guarantees they are
//! real.

use crate::activations::{Activation, AffineActivation};
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// `d2` below this is treated as a degenerate (constant) activation.
pub const DEGENERATE_D2: f64 = 1e-12;

/// Slack allowed on the Gaussian-Poincaré inequality before it is reported
/// as a violation.
pub const POINCARE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    /// `E[phi]`
    pub m1: f64,
    /// `E[phi^2]`
    pub m2: f64,
    /// `E[phi'^2]`
    pub d2: f64,
    /// `m2 - m1^2`, clamped at zero when rounding pushes it just below.
    pub variance: f64,
}

/// Which of the two roots of `psi` supplies `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootSelection {
    /// Reproduce the published per-activation choice; custom activations
    /// fall back to `NonNegativeMean`.
    MatchTable,
    /// Root for which `E[a * phi + b] >= 0`.
    NonNegativeMean,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpnConstants {
    pub a: f64,
    pub b: f64,
    /// `b` from `c = -m1 + sqrt(d2 - Var)`.
    pub root_plus: f64,
    /// `b` from `c = -m1 - sqrt(d2 - Var)`.
    pub root_minus: f64,
    pub selection: RootSelection,
}

impl GpnConstants {
    pub fn normalized(&self, base: Activation) -> AffineActivation {
        AffineActivation::new(base, self.a, self.b)
    }
}

/// Result of [`verify_gpn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpnVerification {
    pub moments: MomentReport,
    pub tol: f64,
    pub passed: bool,
}

/// Hermite coefficients `a_k = E[f H_k]` in the orthonormal probabilists'
/// basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSpectrum {
    pub coeffs: Vec<f64>,
}

impl HermiteSpectrum {
    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `sum_k a_k^2`, which approaches `E[f^2]` as the degree grows.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `sum_{k>=2} (k - 1) a_k^2`. Zero iff `f` is affine, and equal to
    /// `E[f'^2] - E[f^2] + a_0^2` for a complete expansion, so for a GPN
    /// function it measures how far `E[f]^2` is from zero.
    pub fn nonlinearity(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, c)| (k as f64 - 1.0) * c * c)
            .sum()
    }
}

/// The rule an activation's expectations are evaluated on: the split rule
/// for activations with a breakpoint at 0, `rule` otherwise.
pub fn rule_for(spec: &Activation, rule: &QuadratureRule) -> QuadratureRule {
    if spec.piecewise() {
        rule.split_at_zero()
    } else {
        rule.clone()
    }
}

/// `E[phi]`, `E[phi^2]` and `E[phi'^2]` under `N(0, 1)`.
pub fn moments(spec: &Activation, rule: &QuadratureRule) -> Result<MomentReport> {
    affine_moments(&AffineActivation::raw(spec.clone()), rule)
}

fn affine_moments(act: &AffineActivation, rule: &QuadratureRule) -> Result<MomentReport> {
    let rule = rule_for(&act.base, rule);
    let m1 = rule.expectation(|x| act.value(x))?;
    let m2 = rule.expectation(|x| act.value(x).powi(2))?;
    let d2 = rule.expectation(|x| act.derivative(x).powi(2))?;
    let mut variance = m2 - m1 * m1;
    if (-1e-12..0.0).contains(&variance) {
        variance = 0.0;
    }
    Ok(MomentReport {
        m1,
        m2,
        d2,
        variance,
    })
}

/// Solve for `(a, b)` making `a * phi + b` Gaussian-Poincaré normalized.
pub fn gpn_constants(
    spec: &Activation,
    rule: &QuadratureRule,
    selection: RootSelection,
) -> Result<GpnConstants> {
    let m = moments(spec, rule)?;
    constants_from_moments(spec, &m, selection)
}

pub fn constants_from_moments(
    spec: &Activation,
    m: &MomentReport,
    selection: RootSelection,
) -> Result<GpnConstants> {
    if !(m.d2 > DEGENERATE_D2) {
        return Err(Error::DegenerateActivation { d2: m.d2 });
    }
    let gap = m.d2 - m.variance;
    if gap < -POINCARE_SLACK {
        return Err(Error::PoincareViolation { gap });
    }
    let radius = gap.max(0.0).sqrt();
    let a = m.d2.powf(-0.5);
    let root_plus = a * (-m.m1 + radius);
    let root_minus = a * (-m.m1 - radius);
    let plus = match selection {
        RootSelection::Plus => true,
        RootSelection::Minus => false,
        // E[a phi + b] = a (m1 + c) = ±a * radius
        RootSelection::NonNegativeMean => true,
        RootSelection::MatchTable => table_root_is_plus(spec),
    };
    Ok(GpnConstants {
        a,
        b: if plus { root_plus } else { root_minus },
        root_plus,
        root_minus,
        selection,
    })
}

/// Published root per activation: the `+` root everywhere except GELU.
fn table_root_is_plus(spec: &Activation) -> bool {
    !matches!(spec, Activation::Gelu { .. })
}

/// Moments of `a * phi + b`; passes iff both second moments are within
/// `tol` of one.
pub fn verify_gpn(
    spec: &Activation,
    a: f64,
    b: f64,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<GpnVerification> {
    if !(tol > 0.0) {
        return Err(Error::invalid("verify_gpn tolerance must be positive"));
    }
    let moments = affine_moments(&AffineActivation::new(spec.clone(), a, b), rule)?;
    let passed = (moments.m2 - 1.0).abs() <= tol && (moments.d2 - 1.0).abs() <= tol;
    Ok(GpnVerification {
        moments,
        tol,
        passed,
    })
}

/// `E[phi'^2] - Var[phi]`; non-negative for every valid activation.
pub fn poincare_gap(spec: &Activation, rule: &QuadratureRule) -> Result<f64> {
    let m = moments(spec, rule)?;
    Ok(m.d2 - m.variance)
}

/// Coefficients of `f` against `H_0 .. H_K`, the orthonormal probabilists'
/// Hermite polynomials `H_{k+1} = (x H_k - sqrt(k) H_{k-1}) / sqrt(k + 1)`.
///
/// Needs `rule.order() >= 2K + 2` so that `H_k^2` is integrated exactly.
pub fn hermite_coefficients<F: Fn(f64) -> f64>(
    f: F,
    max_degree: usize,
    rule: &QuadratureRule,
) -> Result<HermiteSpectrum> {
    let needed = 2 * max_degree + 2;
    if rule.order() < needed {
        return Err(Error::Precision {
            order: rule.order(),
            needed,
        });
    }
    let mut coeffs = vec![0.0; max_degree + 1];
    let mut h = vec![0.0; max_degree + 1];
    for (x, w) in rule.iter() {
        if w == 0.0 {
            continue;
        }
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite {
                location: format!("quadrature node x = {x}"),
                value: fx,
            });
        }
        // Carry sqrt(w) * H_k(x) so that large |x| cannot overflow.
        let sw = w.sqrt();
        h[0] = sw;
        if max_degree >= 1 {
            h[1] = x * sw;
        }
        for k in 1..max_degree {
            h[k + 1] = (x * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        }
        for (c, hk) in coeffs.iter_mut().zip(&h) {
            *c += sw * fx * hk;
        }
    }
    Ok(HermiteSpectrum { coeffs })
}

/// Hermite spectrum of `a * phi + b`, on the split rule when `phi` is
/// piecewise.
pub fn activation_spectrum(
    act: &AffineActivation,
    max_degree: usize,
    rule: &QuadratureRule,
) -> Result<HermiteSpectrum> {
    let rule = rule_for(&act.base, rule);
    hermite_coefficients(|x| act.value(x), max_degree, &rule)
}
