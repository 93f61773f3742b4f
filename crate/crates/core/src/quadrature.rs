//! Gaussian quadrature under the standard normal measure.
//!
//! Nodes and weights come from the Golub-Welsch method: the eigenvalues of
//! the Jacobi matrix of the orthogonal polynomial family are the nodes and
//! the squared first components of its eigenvectors are the weights. For
//! the probabilists' Hermite family the Jacobi matrix has a zero diagonal
//! and off-diagonal entries `sqrt(k)`, so no rescaling of the physicists'
//! rule is needed.
//!
//! Integrands with a breakpoint at the origin (ReLU and friends) converge
//! only algebraically under a full-line Gauss-Hermite rule. For those,
//! [`QuadratureRule::split_at_zero`] maps the rule onto two Gauss-Legendre
//! panels covering `(-HALF_LINE_CUTOFF, 0)` and `(0, HALF_LINE_CUTOFF)`,
//! which never evaluate the integrand at the kink.

use crate::{Error, Result};

/// Default node count: odd, so the full-line rule has a node at 0.
pub const DEFAULT_ORDER: usize = 501;

/// Largest order accepted by [`gauss_hermite_rule`].
pub const MAX_ORDER: usize = 2000;

/// Half-line panels stop here; the Gaussian tail beyond is below `1e-340`.
pub const HALF_LINE_CUTOFF: f64 = 40.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    split: bool,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Whether this rule is a pair of half-line panels avoiding the origin.
    pub fn is_split(&self) -> bool {
        self.split
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Σ wᵢ f(xᵢ), rejecting non-finite integrand values.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.iter() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("quadrature node x = {x}"),
                    value: v,
                });
            }
            acc.add(w * v);
        }
        Ok(acc.total())
    }

    /// Two Gauss-Legendre panels on `(-40, 0)` and `(0, 40)` weighted by the
    /// Gaussian density, with `ceil(order / 2)` nodes each. Splitting an
    /// already split rule returns it unchanged.
    pub fn split_at_zero(&self) -> QuadratureRule {
        if self.split {
            return self.clone();
        }
        let per_half = self.order().div_ceil(2).max(1);
        let (u, wl) = gauss_legendre_unit(per_half);
        let half = HALF_LINE_CUTOFF / 2.0;
        let mut nodes = Vec::with_capacity(2 * per_half);
        let mut weights = Vec::with_capacity(2 * per_half);
        // u is ascending on (-1, 1); the negative panel is its mirror image
        for (&ui, &wi) in u.iter().zip(&wl).rev() {
            let x = -half * (1.0 + ui);
            nodes.push(x);
            weights.push(half * wi * gaussian_density(x));
        }
        for (&ui, &wi) in u.iter().zip(&wl) {
            let x = half * (1.0 + ui);
            nodes.push(x);
            weights.push(half * wi * gaussian_density(x));
        }
        QuadratureRule {
            nodes,
            weights,
            split: true,
        }
    }
}

/// Expectation of `f` under `N(0, 1)` using `rule`.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64> {
    rule.expectation(f)
}

/// Probabilists' Gauss-Hermite rule with `order` nodes.
///
/// Exact for polynomials of degree `2 * order - 1` under `N(0, 1)`. Weights
/// of the outermost nodes of large rules underflow to zero.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::QuadratureOrder {
            order,
            cap: MAX_ORDER,
        });
    }
    let diag = vec![0.0; order];
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    let (mut nodes, mut weights) = golub_welsch(&diag, &off)?;

    // Enforce exact symmetry about 0.
    let n = order;
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule {
        nodes,
        weights,
        split: false,
    })
}

/// The default rule (order [`DEFAULT_ORDER`]).
pub fn default_rule() -> QuadratureRule {
    gauss_hermite_rule(DEFAULT_ORDER).expect("default order is within range")
}

fn gaussian_density(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Gauss-Legendre nodes (ascending) and weights on `(-1, 1)`.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (mut nodes, mut weights) =
        golub_welsch(&diag, &off).expect("Legendre Jacobi matrix is well conditioned");
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    // total mass of the Legendre weight is 2
    weights.iter_mut().for_each(|w| *w *= 2.0);
    (nodes, weights)
}

/// Eigenvalues of the symmetric tridiagonal matrix `(diag, off)` together
/// with the squared first components of the normalized eigenvectors, sorted
/// by eigenvalue. Implicit QL with Wilkinson shifts, rotating only the first
/// row of the eigenvector matrix.
fn golub_welsch(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    debug_assert_eq!(off.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }

    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 100 {
                return Err(Error::invalid(format!(
                    "tridiagonal eigensolver did not converge for eigenvalue {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let nodes = order.iter().map(|&i| d[i]).collect();
    let weights = order.iter().map(|&i| z[i] * z[i]).collect();
    Ok((nodes, weights))
}

/// Compensated summation with a fixed evaluation order.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}
