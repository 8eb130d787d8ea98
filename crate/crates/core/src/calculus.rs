//! Parametrices, resolvents, parameter ellipticity and the contour-integral
//! functional calculus.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelProblem;
use crate::quantize::{exact_composition, galerkin_matrix, symbol_from_matrix};
use crate::symbols::{DifferenceCalculus, Symbol};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Condition number above which a shifted matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Maps Gauss–Legendre on `[-1, 1]` to `[lo, hi]` (either order).
fn mapped_rule(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    x.iter().zip(&w).map(|(x, w)| (mid + half * x, half * w)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourKind {
    KeyholeNegativeAxis,
    Circle,
    Polyline,
}

/// Closed quadrature-discretized curve; `weights` already include `dz`.
#[derive(Debug, Clone)]
pub struct Contour {
    pub kind: ContourKind,
    pub epsilon: f64,
    pub radius: f64,
    pub theta: f64,
    pub nodes_per_segment: usize,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl Contour {
    /// Boundary of `{ε < |z| < R, |arg z| < π - θ}`, traversed counterclockwise:
    /// outer arc, upper ray inward, inner arc, lower ray outward. Arcs use
    /// Gauss–Legendre in the angle, rays in `log |z|`.
    pub fn keyhole(epsilon: f64, radius: f64, theta: f64, per_segment: usize) -> Result<Self> {
        if !(epsilon > 0.0 && radius > epsilon && theta > 0.0 && theta < PI && per_segment > 0) {
            return Err(Error::Contour(format!(
                "keyhole needs 0 < ε < R and θ in (0, π): ε={epsilon}, R={radius}, θ={theta}"
            )));
        }
        let open = PI - theta;
        let mut nodes = Vec::with_capacity(4 * per_segment);
        let mut weights = Vec::with_capacity(4 * per_segment);
        let mut arc = |r: f64, from: f64, to: f64| {
            for (phi, w) in mapped_rule(per_segment, from, to) {
                let z = Complex64::from_polar(r, phi);
                nodes.push(z);
                weights.push(Complex64::i() * z * w);
            }
        };
        arc(radius, -open, open);
        let ray = |phi: f64, from: f64, to: f64| -> Vec<(Complex64, Complex64)> {
            mapped_rule(per_segment, from.ln(), to.ln())
                .into_iter()
                .map(|(s, w)| {
                    let z = Complex64::from_polar(s.exp(), phi);
                    (z, z * w)
                })
                .collect()
        };
        let upper = ray(open, radius, epsilon);
        let lower = ray(-open, epsilon, radius);
        for (z, w) in upper {
            nodes.push(z);
            weights.push(w);
        }
        for (phi, w) in mapped_rule(per_segment, open, -open) {
            let z = Complex64::from_polar(epsilon, phi);
            nodes.push(z);
            weights.push(Complex64::i() * z * w);
        }
        for (z, w) in lower {
            nodes.push(z);
            weights.push(w);
        }
        Ok(Self {
            kind: ContourKind::KeyholeNegativeAxis,
            epsilon,
            radius,
            theta,
            nodes_per_segment: per_segment,
            nodes,
            weights,
        })
    }

    /// Default keyhole: `θ = π/6`, `ε = 0.1`, `R = 4·max|λ|`.
    pub fn default_keyhole(spectral_radius: f64, per_segment: usize) -> Result<Self> {
        Self::keyhole(0.1, 4.0 * spectral_radius.max(1.0), PI / 6.0, per_segment)
    }

    /// Counterclockwise circle, Gauss–Legendre in the angle.
    pub fn circle(center: Complex64, radius: f64, per_segment: usize) -> Result<Self> {
        if !(radius > 0.0) || per_segment == 0 {
            return Err(Error::Contour(format!("circle radius must be positive, got {radius}")));
        }
        let (nodes, weights) = mapped_rule(per_segment, 0.0, 2.0 * PI)
            .into_iter()
            .map(|(phi, w)| {
                let offset = Complex64::from_polar(radius, phi);
                (center + offset, Complex64::i() * offset * w)
            })
            .unzip();
        Ok(Self {
            kind: ContourKind::Circle,
            epsilon: radius,
            radius,
            theta: PI,
            nodes_per_segment: per_segment,
            nodes,
            weights,
        })
    }

    /// Closed polygon through `vertices`, Gauss–Legendre on each edge.
    pub fn polyline(vertices: &[Complex64], per_segment: usize) -> Result<Self> {
        if vertices.len() < 3 || per_segment == 0 {
            return Err(Error::Contour("a closed polyline needs at least three vertices".into()));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (k, &a) in vertices.iter().enumerate() {
            let b = vertices[(k + 1) % vertices.len()];
            for (t, w) in mapped_rule(per_segment, 0.0, 1.0) {
                nodes.push(a + (b - a) * t);
                weights.push((b - a) * w);
            }
        }
        let radius = vertices.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let epsilon = vertices.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind: ContourKind::Polyline,
            epsilon,
            radius,
            theta: PI,
            nodes_per_segment: per_segment,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_k w_k g(z_k)` in node order.
    pub fn integrate(&self, g: impl Fn(Complex64) -> Complex64) -> Complex64 {
        self.nodes.iter().zip(&self.weights).fold(ZERO, |acc, (&z, &w)| acc + w * g(z))
    }
}

/// Largest `|λ|` of a matrix; falls back to the max row sum when the Schur
/// iteration does not converge.
pub fn spectral_radius(matrix: &DMatrix<Complex64>) -> f64 {
    let diagonal = (0..matrix.nrows()).all(|r| (0..matrix.ncols()).all(|c| r == c || matrix[(r, c)] == ZERO));
    if diagonal {
        return matrix.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    match matrix.clone().try_schur(1e-14, 10_000) {
        Some(schur) => schur.eigenvalues().map(|e| e.iter().map(|z| z.norm()).fold(0.0, f64::max)),
        None => None,
    }
    .unwrap_or_else(|| matrix.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max))
}

/// 2-norm condition number.
pub fn condition_number(matrix: &DMatrix<Complex64>) -> f64 {
    let sv = matrix.singular_values();
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `(M - z)^{-1}`, refusing near-singular shifts.
pub fn resolvent_matrix(matrix: &DMatrix<Complex64>, z: Complex64) -> Result<DMatrix<Complex64>> {
    let n = matrix.nrows();
    let shifted = matrix - DMatrix::<Complex64>::identity(n, n) * z;
    let condition = condition_number(&shifted);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SpectrumProximity { z: format!("{z}"), condition });
    }
    shifted.try_inverse().ok_or_else(|| Error::SpectrumProximity { z: format!("{z}"), condition: f64::INFINITY })
}

/// Symbol of the exact truncated resolvent `(Op(a) - z)^{-1}`.
pub fn resolvent_symbol(model: &ModelProblem, a: &Symbol, z: Complex64) -> Result<Symbol> {
    let m = galerkin_matrix(model, a);
    let r = resolvent_matrix(&m.matrix, z)?;
    Ok(symbol_from_matrix(model, &r)?.with_order(-a.order()).with_label(format!("resolvent({},{z})", a.label())))
}

/// Result of the parametrix recursion.
#[derive(Debug, Clone)]
pub struct Parametrix {
    /// `B_0 + … + B_{N_terms}`.
    pub symbol: Symbol,
    pub terms: Vec<Symbol>,
    /// `sup |⟨ξ⟩^m a^{-1}|` over the grid and the window.
    pub ellipticity_sup: f64,
}

/// Smallest `|a|` accepted by the parametrix.
pub const ELLIPTICITY_FLOOR: f64 = 1e-12;

/// `B_0 = a^{-1}`, `B_N = -a^{-1} Σ_{k<N} (1/(N-k)!) Δ^{N-k} a · D^(N-k) B_k`.
pub fn parametrix(calc: &DifferenceCalculus<'_>, a: &Symbol, m: f64, n_terms: usize) -> Result<Parametrix> {
    let model = calc.model();
    for xi in a.indices() {
        for (i, v) in a.column(xi).iter().enumerate() {
            if !(v.norm() >= ELLIPTICITY_FLOOR) {
                return Err(Error::Ellipticity(format!("|a| = {:.3e} at xi={xi}, x={}", v.norm(), model.grid()[i])));
            }
        }
    }
    let n = model.n() as i64;
    let inverse = a.map(|v| 1.0 / v).with_order(-m).with_label(format!("parametrix({})", a.label()));
    let ellipticity_sup = inverse.weighted_sup(n, |xi| model.bracket_of(xi).powf(m));
    let mut terms = vec![inverse.clone()];
    let mut factorials = vec![1.0];
    for k in 1..=n_terms {
        factorials.push(factorials[k - 1] * k as f64);
    }
    for order in 1..=n_terms {
        let mut acc: Option<Symbol> = None;
        for (k, bk) in terms.iter().enumerate() {
            let gamma = order - k;
            let piece = calc
                .delta(a, gamma)?
                .mul(&calc.derivative(bk, gamma)?)
                .scale(Complex64::new(1.0 / factorials[gamma], 0.0));
            acc = Some(match acc {
                None => piece,
                Some(s) => s.add(&piece),
            });
        }
        let next = inverse.mul(&acc.expect("order >= 1 has at least one term")).scale(Complex64::new(-1.0, 0.0));
        terms.push(next.with_order(-m - (a.rho() - a.delta()) * order as f64));
    }
    let mut symbol = terms[0].clone();
    for t in &terms[1..] {
        symbol = symbol.add(t);
    }
    Ok(Parametrix { symbol: symbol.with_order(-m).with_label(inverse.label()), terms, ellipticity_sup })
}

/// `sup_{|ξ| ≤ N/2} |σ(Op(a) Op(b)) - 1|`.
pub fn inverse_defect(model: &ModelProblem, a: &Symbol, b: &Symbol) -> Result<f64> {
    Ok(inverse_defect_profile(model, a, b)?.iter().map(|p| p.1).fold(0.0, f64::max))
}

/// `(ξ, sup_x |σ(Op(a) Op(b))(x, ξ) - 1|)` for `|ξ| ≤ N/2`.
pub fn inverse_defect_profile(model: &ModelProblem, a: &Symbol, b: &Symbol) -> Result<Vec<(i64, f64)>> {
    let product = exact_composition(model, a, b)?;
    let inner = model.n() as i64 / 2;
    Ok((-inner..=inner)
        .map(|xi| (xi, product.column(xi).iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max)))
        .collect())
}

/// Sample points `r·e^{iφ}` along a ray, `r` from `0` to `max_radius`
/// (geometrically spaced after the origin).
pub fn ray_samples(angle: f64, max_radius: f64, count: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO];
    if count < 2 {
        return out;
    }
    let lo: f64 = 1e-3;
    let steps = count - 1;
    for k in 0..steps {
        let t = k as f64 / (steps - 1).max(1) as f64;
        let r = lo * (max_radius / lo).powf(t);
        out.push(Complex64::from_polar(r, angle));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityCertificate {
    /// `sup |(|λ|^{1/m} + ⟨ξ⟩)^m (a - λ)^{-1}|`.
    pub sup: f64,
    pub bound: Option<f64>,
    pub pass: bool,
    /// Largest relative error of the central difference of `R_λ` against `R_λ²`.
    pub derivative_error: f64,
    /// `λ` samples actually used (after jitter).
    pub samples: usize,
}

/// Bound check for `(a - λ)^{-1}` over sampled `λ`, the grid and the window.
pub fn certify_parameter_ellipticity<R: Rng + ?Sized>(
    model: &ModelProblem,
    a: &Symbol,
    m: f64,
    lambdas: &[Complex64],
    bound: Option<f64>,
    rng: &mut R,
) -> Result<EllipticityCertificate> {
    let n = model.n() as i64;
    let mut sup: f64 = 0.0;
    let mut derivative_error: f64 = 0.0;
    for &lambda0 in lambdas {
        let mut lambda = lambda0;
        let mut attempts = 0;
        while min_gap(a, n, lambda) < 1e-12 * lambda.norm().max(1.0) {
            attempts += 1;
            if attempts > 3 {
                return Err(Error::Ellipticity(format!("λ = {lambda0} coincides with a value of the symbol")));
            }
            let jitter = 1e-8 * lambda0.norm().max(1.0);
            lambda = lambda0 + Complex64::from_polar(jitter, rng.random::<f64>() * 2.0 * PI);
        }
        let h = 1e-4 * lambda.norm().max(1.0);
        for xi in -n..=n {
            let weight = (lambda.norm().powf(1.0 / m) + model.bracket_of(xi)).powf(m);
            for &v in a.column(xi) {
                let r = 1.0 / (v - lambda);
                sup = sup.max(weight * r.norm());
                let fd = (1.0 / (v - lambda - h) - 1.0 / (v - lambda + h)) / (2.0 * h);
                let exact = r * r;
                derivative_error = derivative_error.max((fd - exact).norm() / exact.norm());
            }
        }
    }
    let pass = sup.is_finite() && bound.is_none_or(|b| sup <= b);
    Ok(EllipticityCertificate { sup, bound, pass, derivative_error, samples: lambdas.len() })
}

fn min_gap(a: &Symbol, n: i64, lambda: Complex64) -> f64 {
    (-n..=n).flat_map(|xi| a.column(xi).iter().map(move |v| (v - lambda).norm())).fold(f64::INFINITY, f64::min)
}

/// Scalar functions available to the functional calculus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `z^{-1}`.
    Inverse,
    /// `z^{-1/2}`.
    InverseSqrt,
    /// `z^s`, principal branch.
    Power { s: f64 },
}

impl FunctionSpec {
    pub fn exponent(&self) -> f64 {
        match *self {
            FunctionSpec::Inverse => -1.0,
            FunctionSpec::InverseSqrt => -0.5,
            FunctionSpec::Power { s } => s,
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            FunctionSpec::Inverse => 1.0 / z,
            _ => z.powc(Complex64::new(self.exponent(), 0.0)),
        }
    }

    /// Only decaying powers are admitted.
    pub fn check(&self) -> Result<()> {
        let s = self.exponent();
        if !(s < 0.0) {
            return Err(Error::Config(format!("F(z) = z^{s} does not decay; the calculus needs s < 0")));
        }
        Ok(())
    }
}

/// Output of [`dunford_riesz`].
#[derive(Debug, Clone)]
pub struct FunctionalCalculus {
    pub symbol: Symbol,
    /// `F(A)` on the index window.
    pub matrix: DMatrix<Complex64>,
    /// `-(1/2πi) ∮ F(z)(a(x,ξ) - z)^{-1} dz` pointwise.
    pub leading: Symbol,
    /// `±1` chosen by the probe so that scalars map to `F(scalar)`.
    pub orientation: f64,
}

/// `σ_{F(A)} = -(1/2πi) Σ_k w_k F(z_k) σ((Op(a) - z_k)^{-1})`.
pub fn dunford_riesz<F>(model: &ModelProblem, a: &Symbol, f: F, contour: &Contour) -> Result<FunctionalCalculus>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let values: Vec<Complex64> = contour.nodes.iter().map(|&z| f(z)).collect();
    if let Some(k) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Contour(format!("F is not finite at node z={}", contour.nodes[k])));
    }
    let probe = a.get(0, 0);
    let orientation = calibrate(contour, &values, probe, f(probe))?;
    let prefactor = Complex64::new(0.0, 1.0 / (2.0 * PI)) * orientation;
    let m = galerkin_matrix(model, a).matrix;
    let len = model.len();
    let pieces: Vec<DMatrix<Complex64>> = contour
        .nodes
        .par_iter()
        .zip(contour.weights.par_iter())
        .zip(values.par_iter())
        .map(|((&z, &w), &fz)| Ok(resolvent_matrix(&m, z)? * (w * fz)))
        .collect::<Result<_>>()?;
    // -1/(2πi) = i/(2π)
    let matrix = pieces.into_iter().fold(DMatrix::zeros(len, len), |acc, p| acc + p) * prefactor;
    let symbol = symbol_from_matrix(model, &matrix)?.with_label(format!("F({})", a.label()));
    let leading = a.map(|v| {
        contour
            .nodes
            .iter()
            .zip(&contour.weights)
            .zip(&values)
            .fold(ZERO, |acc, ((&z, &w), &fz)| acc + w * fz / (v - z))
            * prefactor
    });
    Ok(FunctionalCalculus { symbol, matrix, leading, orientation })
}

fn calibrate(contour: &Contour, values: &[Complex64], probe: Complex64, target: Complex64) -> Result<f64> {
    let raw = contour
        .nodes
        .iter()
        .zip(&contour.weights)
        .zip(values)
        .fold(ZERO, |acc, ((&z, &w), &fz)| acc + w * fz / (probe - z));
    let candidate = raw * Complex64::new(0.0, 1.0 / (2.0 * PI));
    let scale = target.norm().max(candidate.norm());
    if scale == 0.0 {
        return Ok(1.0);
    }
    let plus = (candidate - target).norm();
    let minus = (candidate + target).norm();
    let (sign, err) = if plus <= minus { (1.0, plus) } else { (-1.0, minus) };
    if err > 1e-3 * scale {
        return Err(Error::Contour(format!("contour does not enclose the probe value {probe} (mismatch {err:.3e})")));
    }
    Ok(sign)
}

/// `exp(s · Log a)` pointwise, principal branch.
pub fn fractional_power_symbol(a: &Symbol, s: Complex64) -> Result<Symbol> {
    for xi in a.indices() {
        if a.column(xi).iter().any(|v| v.im == 0.0 && v.re <= 0.0) {
            return Err(Error::Branch { xi });
        }
    }
    Ok(a.map(|v| (s * v.ln()).exp()).with_order(a.order() * s.re).with_label(format!("({})^({s})", a.label())))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{build_model, ModelSpec};
    use crate::symbols::SymbolSpec;

    fn torus() -> ModelProblem {
        build_model(ModelSpec::torus_derivative(16, 128)).unwrap()
    }

    fn bracket_sq(model: &ModelProblem) -> Symbol {
        SymbolSpec::BracketPower { s: 2.0, scale: 1.0 }.build(model)
    }

    fn modulated(model: &ModelProblem) -> Symbol {
        SymbolSpec::ModulatedBracketPower { s: 2.0, amplitude: 0.5, scale: 1.0 }.build(model)
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(100);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn contour_closes() {
        for c in [
            Contour::keyhole(0.1, 50.0, PI / 6.0, 40).unwrap(),
            Contour::circle(Complex64::new(1.0, 0.0), 2.0, 60).unwrap(),
            Contour::polyline(
                &[
                    Complex64::new(-1.0, -1.0),
                    Complex64::new(3.0, -1.0),
                    Complex64::new(3.0, 1.0),
                    Complex64::new(-1.0, 1.0),
                ],
                30,
            )
            .unwrap(),
        ] {
            assert!(c.integrate(|_| Complex64::new(1.0, 0.0)).norm() < 1e-10, "{:?}", c.kind);
            let winding = c.integrate(|z| 1.0 / (z - 2.0)) / Complex64::new(0.0, 2.0 * PI);
            assert!((winding - 1.0).norm() < 1e-8, "{:?} {winding}", c.kind);
        }
        assert!(Contour::keyhole(1.0, 0.5, 0.3, 10).is_err());
    }

    #[test]
    fn parametrix_multiplier_is_exact() {
        let model = torus();
        let calc = DifferenceCalculus::standard(&model);
        let a = bracket_sq(&model);
        let p = parametrix(&calc, &a, 2.0, 3).unwrap();
        for t in &p.terms[1..] {
            assert_eq!(t.max_abs(), 0.0);
        }
        assert!(inverse_defect(&model, &a, &p.symbol).unwrap() <= 1e-12);
        assert!((p.ellipticity_sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parametrix_variable_coefficient_gains_order() {
        let model = torus();
        let calc = DifferenceCalculus::standard(&model);
        let a = modulated(&model);
        // the gain is asymptotic: compare on 3N/8 ≤ |ξ| ≤ N/2
        let tail = |n: usize| {
            let b = parametrix(&calc, &a, 2.0, n).unwrap().symbol;
            inverse_defect_profile(&model, &a, &b)
                .unwrap()
                .into_iter()
                .filter(|p| p.0.abs() >= 6)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        };
        let defects: Vec<f64> = (0..=2).map(tail).collect();
        assert!(defects[1] < defects[0] && defects[2] * 2.0 <= defects[0], "{defects:?}");
    }

    #[test]
    fn parametrix_rejects_zero() {
        let model = build_model(ModelSpec::torus_derivative(4, 24)).unwrap();
        let calc = DifferenceCalculus::standard(&model);
        let a = Symbol::from_fn(&model, 4, |p| {
            if p.xi == 2 && p.grid_index == 5 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(p.bracket, 0.0)
            }
        });
        assert!(matches!(parametrix(&calc, &a, 1.0, 1), Err(Error::Ellipticity(_))));
    }

    #[test]
    fn ellipticity_examples() {
        let model = torus();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = bracket_sq(&model);
        let cert =
            certify_parameter_ellipticity(&model, &a, 2.0, &ray_samples(PI, 1e6, 60), Some(2.0), &mut rng).unwrap();
        assert!(cert.pass && cert.sup <= 2.0, "{}", cert.sup);
        assert!(cert.derivative_error <= 1e-6, "{}", cert.derivative_error);
        let at_zero = certify_parameter_ellipticity(&model, &a, 2.0, &[ZERO], None, &mut rng).unwrap();
        assert!((at_zero.sup - 1.0).abs() < 1e-12);
        let lam = SymbolSpec::LambdaMultiplier.build(&model);
        let cert = certify_parameter_ellipticity(&model, &lam, 1.0, &ray_samples(-PI / 2.0, 1e4, 40), None, &mut rng);
        assert!(cert.unwrap().sup.is_finite());
        // λ hitting a value of a: jitter moves it off
        let hit = certify_parameter_ellipticity(&model, &a, 2.0, &[Complex64::new(1.0, 0.0)], None, &mut rng).unwrap();
        assert!(hit.sup.is_finite());
    }

    #[test]
    fn resolvent_examples() {
        let model = torus();
        let a = bracket_sq(&model);
        let z = Complex64::new(-3.0, 1.0);
        let r = resolvent_symbol(&model, &a, z).unwrap();
        for xi in -16..=16 {
            let expected = 1.0 / (a.get(xi, 0) - z);
            assert!((r.get(xi, 7) - expected).norm() < 1e-15 * 10.0);
        }
        let eig = a.get(3, 0);
        assert!(matches!(resolvent_symbol(&model, &a, eig), Err(Error::SpectrumProximity { .. })));

        let m = galerkin_matrix(&model, &modulated(&model)).matrix;
        let (z, w) = (Complex64::new(-1.0, 0.5), Complex64::new(-2.0, -0.3));
        let lhs = resolvent_matrix(&m, z).unwrap() - resolvent_matrix(&m, w).unwrap();
        let rhs = resolvent_matrix(&m, z).unwrap() * resolvent_matrix(&m, w).unwrap() * (z - w);
        assert!((lhs - rhs).camax() < 1e-10);
    }

    #[test]
    fn resolvent_matches_parametrix_of_shift() {
        let model = torus();
        let calc = DifferenceCalculus::standard(&model);
        let a = modulated(&model);
        let z = Complex64::new(-1.0, 0.0);
        let exact = resolvent_symbol(&model, &a, z).unwrap();
        let shifted = a.map(|v| v - z);
        let inner = model.n() as i64 / 2;
        let gaps: Vec<f64> = (0..=2)
            .map(|n| {
                let p = parametrix(&calc, &shifted, 2.0, n).unwrap().symbol;
                let gap = exact.sub(&p);
                (inner / 2..=inner)
                    .flat_map(|xi| [xi, -xi])
                    .map(|xi| {
                        let w = model.bracket_of(xi).powi(2);
                        gap.column(xi).iter().map(|v| v.norm() * w).fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(gaps[2] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn functional_calculus_multiplier_oracle() {
        let model = torus();
        let a = bracket_sq(&model);
        let radius = spectral_radius(&galerkin_matrix(&model, &a).matrix);
        let contour = Contour::default_keyhole(radius, 100).unwrap();
        assert_eq!(contour.len(), 400);
        for s in [-1.0, -0.5, -0.25] {
            let f = FunctionSpec::Power { s };
            let out = dunford_riesz(&model, &a, |z| f.eval(z), &contour).unwrap();
            for xi in -16..=16 {
                let oracle = f.eval(a.get(xi, 0));
                for (v, l) in out.symbol.column(xi).iter().zip(out.leading.column(xi)) {
                    assert!((v - oracle).norm() <= 1e-6 * oracle.norm(), "s={s} xi={xi}");
                    assert!((l - oracle).norm() <= 1e-6 * oracle.norm());
                }
            }
        }
        let zero = dunford_riesz(&model, &a, |_| ZERO, &contour).unwrap();
        assert_eq!(zero.symbol.max_abs(), 0.0);
    }

    #[test]
    fn fractional_power_examples() {
        let model = torus();
        let a = bracket_sq(&model);
        let half = fractional_power_symbol(&a, Complex64::new(0.5, 0.0)).unwrap();
        let one = fractional_power_symbol(&a, ZERO).unwrap();
        for xi in -16..=16 {
            assert!((half.get(xi, 0) - model.bracket_of(xi)).norm() < 1e-12 * model.bracket_of(xi));
            assert_eq!(one.get(xi, 3), Complex64::new(1.0, 0.0));
        }
        let contour = Contour::default_keyhole(a.max_abs(), 100).unwrap();
        let dr = dunford_riesz(&model, &a, |z| FunctionSpec::InverseSqrt.eval(z), &contour).unwrap();
        let direct = fractional_power_symbol(&a, Complex64::new(-0.5, 0.0)).unwrap();
        assert!(dr.symbol.sup_distance(&direct, 16) < 1e-6);

        let b = modulated(&model);
        let (s1, s2) = (Complex64::new(0.3, 0.1), Complex64::new(-0.7, 0.0));
        let lhs = fractional_power_symbol(&b, s1 + s2).unwrap();
        let rhs = fractional_power_symbol(&b, s1).unwrap().mul(&fractional_power_symbol(&b, s2).unwrap());
        for xi in -16..=16 {
            for (l, r) in lhs.column(xi).iter().zip(rhs.column(xi)) {
                assert!((l - r).norm() <= 1e-12 * l.norm().max(1.0));
            }
        }
        let negative = SymbolSpec::BracketPower { s: 2.0, scale: -1.0 }.build(&model);
        assert!(matches!(fractional_power_symbol(&negative, s1), Err(Error::Branch { .. })));
    }

    #[test]
    fn case_two_factorization() {
        // z^{-1} = (z^{-1/2})² realized through Galerkin products
        let model = build_model(ModelSpec::torus_derivative(8, 64)).unwrap();
        let a = modulated(&model);
        let m = galerkin_matrix(&model, &a).matrix;
        let contour = Contour::default_keyhole(spectral_radius(&m), 100).unwrap();
        let f = dunford_riesz(&model, &a, |z| FunctionSpec::Inverse.eval(z), &contour).unwrap();
        let g = dunford_riesz(&model, &a, |z| FunctionSpec::InverseSqrt.eval(z), &contour).unwrap();
        let squared = &g.matrix * &g.matrix;
        assert!((&f.matrix - &squared).camax() < 1e-8);
        assert!((&f.matrix - m.try_inverse().unwrap()).camax() < 1e-8);
    }

    #[test]
    fn function_registry() {
        assert!(FunctionSpec::Power { s: 0.5 }.check().is_err());
        assert!(FunctionSpec::InverseSqrt.check().is_ok());
        let z = Complex64::new(4.0, 0.0);
        assert!((FunctionSpec::InverseSqrt.eval(z) - 0.5).norm() < 1e-15);
    }
}
