//! Truncated model spectral problems.
//!
//! A [`ModelProblem`] is the finite stand-in for a boundary-value operator
//! with discrete biorthogonal spectrum: closed-form eigenvalues `λ_ξ`, the
//! eigenfunctions `u_ξ` and the biorthogonal family `v_ξ`, sampled on a
//! `Q`-point periodic grid of `[0, 1)` for `ξ ∈ {-N, …, N}`.
//!
//! Three kinds are built in:
//!
//! | kind               | `λ_ξ`           | `u_ξ(x)`            | `v_ξ(x)`             | order |
//! |--------------------|-----------------|---------------------|----------------------|-------|
//! | `torus_derivative` | `2πξ`           | `e^{2πiξx}`         | `u_ξ`                | 1     |
//! | `h_derivative`     | `2πξ - i ln h`  | `h^x e^{2πiξx}`     | `h^{-x} e^{2πiξx}`   | 1     |
//! | `torus_laplacian`  | `4π²ξ²`         | `e^{2πiξx}`         | `u_ξ`                | 2     |
//!
//! Every function handled by the library lives in one of the envelope
//! classes `e^{γx}·p(x)` with `p` periodic, where `γ = ln h` for the span of
//! `{u_ξ}` and `γ = -ln h` for the span of `{v_ξ}`. Integrals are computed
//! with a quadrature rule that is exact for `e^{βx}` times a trigonometric
//! polynomial of degree below `Q/2`; for `β = 0` it is the plain periodic
//! trapezoid rule with weights `1/Q`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TorusDerivative,
    HDerivative,
    TorusLaplacian,
}

impl ModelKind {
    pub fn natural_order(self) -> f64 {
        match self {
            ModelKind::TorusDerivative | ModelKind::HDerivative => 1.0,
            ModelKind::TorusLaplacian => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TorusDerivative => "torus_derivative",
            ModelKind::HDerivative => "h_derivative",
            ModelKind::TorusLaplacian => "torus_laplacian",
        }
    }
}

/// Parameters of a truncated model problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Boundary ratio `u(1) = h·u(0)`; only meaningful for `h_derivative`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Index window is `{-truncation, …, truncation}`.
    pub truncation: usize,
    pub quadrature_points: usize,
    /// Operator order. Defaults to the natural order of the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
}

impl ModelSpec {
    pub fn torus_derivative(truncation: usize, quadrature_points: usize) -> Self {
        Self { kind: ModelKind::TorusDerivative, h: None, truncation, quadrature_points, order: None }
    }

    pub fn h_derivative(h: f64, truncation: usize, quadrature_points: usize) -> Self {
        Self { kind: ModelKind::HDerivative, h: Some(h), truncation, quadrature_points, order: None }
    }

    pub fn torus_laplacian(truncation: usize, quadrature_points: usize) -> Self {
        Self { kind: ModelKind::TorusLaplacian, h: None, truncation, quadrature_points, order: None }
    }

    /// Smallest grid for which every coupling integrand is integrated exactly.
    pub fn min_quadrature_points(truncation: usize) -> usize {
        2 * (2 * truncation + 1)
    }

    pub fn order(&self) -> f64 {
        self.order.unwrap_or_else(|| self.kind.natural_order())
    }

    pub fn h_value(&self) -> f64 {
        match self.kind {
            ModelKind::HDerivative => self.h.unwrap_or(1.0),
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_parameters()?;
        let min_q = Self::min_quadrature_points(self.truncation);
        if self.quadrature_points < min_q {
            return Err(Error::Config(format!(
                "quadrature_points = {} is below 2(2N+1) = {} for N = {}",
                self.quadrature_points, min_q, self.truncation
            )));
        }
        Ok(())
    }

    fn validate_parameters(&self) -> Result<()> {
        if self.truncation < 1 && self.kind != ModelKind::TorusLaplacian {
            return Err(Error::Config("truncation N must be at least 1".into()));
        }
        if self.quadrature_points < 2 {
            return Err(Error::Config("quadrature_points must be at least 2".into()));
        }
        match (self.kind, self.h) {
            (ModelKind::HDerivative, None) => return Err(Error::Config("h_derivative requires a parameter h".into())),
            (ModelKind::HDerivative, Some(h)) if !(h.is_finite() && h > 0.0) => {
                return Err(Error::Config(format!("h must be a positive real, got {h}")))
            }
            (ModelKind::TorusDerivative | ModelKind::TorusLaplacian, Some(_)) => {
                return Err(Error::Config(format!("{} takes no parameter h", self.kind.name())))
            }
            _ => {}
        }
        if let Some(m) = self.order {
            if (m - self.kind.natural_order()).abs() > 0.0 {
                return Err(Error::Config(format!(
                    "order {m} does not match {} (order {})",
                    self.kind.name(),
                    self.kind.natural_order()
                )));
            }
        }
        Ok(())
    }
}

/// Weights of a quadrature rule exact for `e^{βx}` times trigonometric
/// polynomials of degree below `Q/2`.
#[derive(Debug, Clone)]
struct EnvelopeRule {
    rate: f64,
    weights: Vec<f64>,
}

fn envelope_weights(q: usize, rate: f64) -> Vec<f64> {
    let qf = q as f64;
    if rate == 0.0 {
        return vec![1.0 / qf; q];
    }
    let growth = rate.exp_m1();
    // integral of e^{βx} e^{2πikx} over [0, 1)
    let moment = |k: f64| Complex64::new(growth, 0.0) / Complex64::new(rate, 2.0 * PI * k);
    let k_max = if q.is_multiple_of(2) { q / 2 - 1 } else { (q - 1) / 2 };
    (0..q)
        .map(|i| {
            let x = i as f64 / qf;
            let mut acc = moment(0.0).re;
            for k in 1..=k_max {
                let phase = Complex64::cis(-2.0 * PI * ((k * i) % q) as f64 / qf);
                acc += 2.0 * (phase * moment(k as f64)).re;
            }
            if q.is_multiple_of(2) {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * growth * rate / (rate * rate + (PI * qf) * (PI * qf));
            }
            (-rate * x).exp() * acc / qf
        })
        .collect()
}

/// Truncated biorthogonal eigen-system with its quadrature grid.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    spec: ModelSpec,
    indices: Vec<i64>,
    eigenvalues: Vec<Complex64>,
    u: Vec<Vec<Complex64>>,
    v: Vec<Vec<Complex64>>,
    grid: Vec<f64>,
    weights: Vec<f64>,
    log_h: f64,
    rules: Vec<EnvelopeRule>,
}

/// Validates `spec` and instantiates the closed-form eigen-data.
pub fn build_model(spec: ModelSpec) -> Result<ModelProblem> {
    spec.validate()?;
    Ok(assemble(spec))
}

/// Builds a model without the quadrature-size check. Used to demonstrate
/// aliasing on undersized grids; every other parameter is still validated.
pub fn build_model_unchecked(spec: ModelSpec) -> Result<ModelProblem> {
    spec.validate_parameters()?;
    Ok(assemble(spec))
}

fn assemble(spec: ModelSpec) -> ModelProblem {
    let n = spec.truncation as i64;
    let q = spec.quadrature_points;
    let log_h = spec.h_value().ln();
    let indices: Vec<i64> = (-n..=n).collect();
    let grid: Vec<f64> = (0..q).map(|i| i as f64 / q as f64).collect();
    let weights = vec![1.0 / q as f64; q];
    let mut rules = Vec::new();
    for rate in [0.0, log_h, -log_h, 2.0 * log_h, -2.0 * log_h] {
        if !rules.iter().any(|r: &EnvelopeRule| r.rate.to_bits() == rate.to_bits()) {
            rules.push(EnvelopeRule { rate, weights: envelope_weights(q, rate) });
        }
    }
    let mut model = ModelProblem {
        spec,
        indices: indices.clone(),
        eigenvalues: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        grid,
        weights,
        log_h,
        rules,
    };
    model.eigenvalues = indices.iter().map(|&xi| model.eigenvalue(xi)).collect();
    model.u = indices.iter().map(|&xi| (0..q).map(|i| model.u_at(xi, i)).collect()).collect();
    model.v = indices.iter().map(|&xi| (0..q).map(|i| model.v_at(xi, i)).collect()).collect();
    model
}

impl ModelProblem {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Truncation `N`.
    pub fn n(&self) -> usize {
        self.spec.truncation
    }

    /// Number of grid points `Q`.
    pub fn q(&self) -> usize {
        self.spec.quadrature_points
    }

    /// Window size `2N + 1`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn order(&self) -> f64 {
        self.spec.order()
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Trapezoid weights `1/Q`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Position of `xi` in the window, if it lies inside.
    pub fn position(&self, xi: i64) -> Option<usize> {
        let n = self.n() as i64;
        (-n..=n).contains(&xi).then(|| (xi + n) as usize)
    }

    /// `ln h`; zero for the torus kinds.
    pub fn log_h(&self) -> f64 {
        self.log_h
    }

    /// Envelope rate `γ` of the span of `{u_ξ}`.
    pub fn u_envelope(&self) -> f64 {
        self.log_h
    }

    /// Envelope rate of the span of `{v_ξ}`.
    pub fn v_envelope(&self) -> f64 {
        -self.log_h
    }

    /// True when `u_ξ = v_ξ` (torus kinds, or `h = 1`).
    pub fn is_self_adjoint(&self) -> bool {
        self.log_h == 0.0
    }

    /// Closed-form eigenvalue, valid for any integer index.
    pub fn eigenvalue(&self, xi: i64) -> Complex64 {
        let j = xi as f64;
        match self.spec.kind {
            ModelKind::TorusDerivative => Complex64::new(2.0 * PI * j, 0.0),
            ModelKind::HDerivative => Complex64::new(2.0 * PI * j, 0.0 - self.log_h),
            ModelKind::TorusLaplacian => Complex64::new(4.0 * PI * PI * j * j, 0.0),
        }
    }

    /// L-Japanese bracket `(1 + |λ_ξ|²)^{1/(2m)}` at any integer index.
    pub fn bracket_of(&self, xi: i64) -> f64 {
        (1.0 + self.eigenvalue(xi).norm_sqr()).powf(1.0 / (2.0 * self.order()))
    }

    fn phase(&self, xi: i64, i: usize) -> Complex64 {
        let q = self.q() as i64;
        let k = (xi * i as i64).rem_euclid(q);
        Complex64::cis(2.0 * PI * k as f64 / q as f64)
    }

    /// `u_ξ(x_i)` at any integer index.
    pub fn u_at(&self, xi: i64, i: usize) -> Complex64 {
        let e = self.phase(xi, i);
        match self.spec.kind {
            ModelKind::HDerivative => e * self.spec.h_value().powf(self.grid_point(i)),
            _ => e,
        }
    }

    /// `v_ξ(x_i)` at any integer index.
    pub fn v_at(&self, xi: i64, i: usize) -> Complex64 {
        let e = self.phase(xi, i);
        match self.spec.kind {
            ModelKind::HDerivative => e * self.spec.h_value().powf(-self.grid_point(i)),
            _ => e,
        }
    }

    fn grid_point(&self, i: usize) -> f64 {
        i as f64 / self.q() as f64
    }

    /// `u_ξ(x)` at an arbitrary point.
    pub fn u_eval(&self, xi: i64, x: f64) -> Complex64 {
        let e = Complex64::cis(2.0 * PI * (xi as f64 * x).fract());
        match self.spec.kind {
            ModelKind::HDerivative => e * self.spec.h_value().powf(x),
            _ => e,
        }
    }

    /// `v_ξ(x)` at an arbitrary point.
    pub fn v_eval(&self, xi: i64, x: f64) -> Complex64 {
        let e = Complex64::cis(2.0 * PI * (xi as f64 * x).fract());
        match self.spec.kind {
            ModelKind::HDerivative => e * self.spec.h_value().powf(-x),
            _ => e,
        }
    }

    /// Grid samples of `u_ξ` for `ξ` inside the window.
    pub fn u(&self, xi: i64) -> &[Complex64] {
        &self.u[self.position(xi).expect("index outside the window")]
    }

    /// Grid samples of `v_ξ` for `ξ` inside the window.
    pub fn v(&self, xi: i64) -> &[Complex64] {
        &self.v[self.position(xi).expect("index outside the window")]
    }

    /// Quadrature weights exact for integrands `e^{rate·x}·p(x)`.
    pub fn envelope_weights(&self, rate: f64) -> std::borrow::Cow<'_, [f64]> {
        match self.rules.iter().find(|r| r.rate.to_bits() == rate.to_bits()) {
            Some(rule) => std::borrow::Cow::Borrowed(&rule.weights),
            None => std::borrow::Cow::Owned(envelope_weights(self.q(), rate)),
        }
    }

    /// `∫_0^1 φ(x) dx` for grid samples of an integrand with envelope `rate`.
    pub fn integrate(&self, samples: &[Complex64], rate: f64) -> Complex64 {
        let w = self.envelope_weights(rate);
        samples.iter().zip(w.iter()).fold(Complex64::new(0.0, 0.0), |acc, (s, w)| acc + s * *w)
    }

    /// Gram matrix `G[η, ξ] = (u_ξ, u_η)_{L²}` in closed form.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let len = self.len();
        let rate = 2.0 * self.log_h;
        DMatrix::from_fn(len, len, |r, c| {
            let d = self.indices[c] - self.indices[r];
            if rate == 0.0 {
                if d == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                Complex64::new(rate.exp_m1(), 0.0) / Complex64::new(rate, 2.0 * PI * d as f64)
            }
        })
    }
}

/// Max over `(ξ, η)` of `|Q(u_ξ v̄_η) - δ_{ξη}|` under the trapezoid rule.
pub fn check_biorthogonality(model: &ModelProblem) -> f64 {
    biorthogonality_rows(model).into_iter().fold(0.0, f64::max)
}

/// Per-`ξ` maximum deviation of the biorthogonality relations.
pub fn biorthogonality_rows(model: &ModelProblem) -> Vec<f64> {
    let w = model.weights();
    model
        .indices()
        .iter()
        .map(|&xi| {
            let u = model.u(xi);
            model
                .indices()
                .iter()
                .map(|&eta| {
                    let v = model.v(eta);
                    let pairing = u
                        .iter()
                        .zip(v)
                        .zip(w)
                        .fold(Complex64::new(0.0, 0.0), |acc, ((a, b), w)| acc + a * b.conj() * *w);
                    let delta = if xi == eta { 1.0 } else { 0.0 };
                    (pairing - delta).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WzReport {
    pub inf_u: Vec<f64>,
    pub inf_v: Vec<f64>,
    /// `C` in the fit `inf|u_ξ| ≥ C⟨ξ⟩^{-N}`.
    pub constant: f64,
    /// Fitted exponent `N` of the same bound.
    pub exponent: f64,
    pub pass: bool,
}

/// Infima of `|u_ξ|` and `|v_ξ|` over the grid closed by the endpoint
/// `x = 1`, and a log-log fit of their decay in `⟨ξ⟩`.
pub fn check_wz(model: &ModelProblem) -> WzReport {
    let inf = |rows: &[Vec<Complex64>], endpoint: &dyn Fn(i64) -> Complex64| -> Vec<f64> {
        rows.iter()
            .zip(model.indices())
            .map(|(r, &xi)| r.iter().map(|z| z.norm()).fold(endpoint(xi).norm(), f64::min))
            .collect()
    };
    let inf_u = inf(&model.u, &|xi| model.u_eval(xi, 1.0));
    let inf_v = inf(&model.v, &|xi| model.v_eval(xi, 1.0));
    // log inf|u_ξ| = log C - N log⟨ξ⟩
    let pts: Vec<(f64, f64)> =
        model.indices().iter().zip(&inf_u).map(|(&xi, &m)| (model.bracket_of(xi).ln(), m.ln())).collect();
    let (slope, intercept) = linear_fit(&pts);
    let pass = inf_u.iter().chain(&inf_v).all(|&m| m > 0.0);
    WzReport { inf_u, inf_v, constant: intercept.exp(), exponent: -slope, pass }
}

/// Least-squares line `y = slope·x + intercept`. Degenerate abscissae give slope 0.
pub(crate) fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `⟨ξ⟩` for every index of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketTable {
    pub indices: Vec<i64>,
    pub values: Vec<f64>,
}

impl BracketTable {
    pub fn get(&self, xi: i64) -> Option<f64> {
        self.indices.iter().position(|&k| k == xi).map(|p| self.values[p])
    }
}

pub fn bracket(model: &ModelProblem) -> BracketTable {
    BracketTable {
        indices: model.indices().to_vec(),
        values: model.indices().iter().map(|&xi| model.bracket_of(xi)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub s: f64,
    /// `Σ_{|ξ| ≤ k} ⟨ξ⟩^{-s}` for `k = 1..N`.
    pub partial_sums: Vec<f64>,
    /// Successive differences `⟨k⟩^{-s} + ⟨-k⟩^{-s}`.
    pub increments: Vec<f64>,
    /// Fitted exponent `p` of `increment_k ~ k^{-p}`.
    pub decay_exponent: f64,
    pub convergent: bool,
}

/// Partial sums of `Σ ⟨ξ⟩^{-s}`, flagged convergent when the increments decay
/// faster than `k^{-1}`.
pub fn s0_tail(model: &ModelProblem, s: f64) -> Result<TailReport> {
    if !s.is_finite() || s < 0.0 {
        return Err(Error::Usage(format!("tail exponent must be nonnegative, got {s}")));
    }
    let term = |xi: i64| model.bracket_of(xi).powf(-s);
    let mut sum = term(0);
    let mut partial_sums = Vec::with_capacity(model.n());
    let mut increments = Vec::with_capacity(model.n());
    for k in 1..=model.n() as i64 {
        let inc = term(k) + term(-k);
        sum += inc;
        partial_sums.push(sum);
        increments.push(inc);
    }
    let start = increments.len() / 2;
    let pts: Vec<(f64, f64)> =
        increments.iter().enumerate().skip(start).map(|(j, &inc)| (((j + 1) as f64).ln(), inc.ln())).collect();
    let decay_exponent = -linear_fit(&pts).0;
    Ok(TailReport { s, partial_sums, increments, decay_exponent, convergent: decay_exponent > 1.0 + 1e-6 })
}
