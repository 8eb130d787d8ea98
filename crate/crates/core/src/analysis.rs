//! Gårding constants, the ε-interpolation inequality, and L² / Hilbert–Schmidt
//! bounds for quantized operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_model, ModelProblem, ModelSpec};
use crate::quantize::{galerkin_matrix, kernel};
use crate::symbols::{Symbol, SymbolSpec};
use crate::transform::{gram_norm_sq, random_coefficients, sobolev_norm, CoeffTag, CoeffVector};

/// Name of the generator behind every random trial.
pub const RNG_NAME: &str = "chacha8";

/// Points of the `C₁` sweep over `(0, 1/C₀]`.
pub const SWEEP_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GardingTrial {
    /// `Re(Au, u)`.
    pub form: f64,
    /// `‖u‖²_{H^{m/2}}`.
    pub sobolev_sq: f64,
    /// `‖u‖²_{L²}`.
    pub l2_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GardingReport {
    /// `sup ⟨ξ⟩^m / Re a`.
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub trials: Vec<GardingTrial>,
    pub violations: usize,
    pub pass: bool,
    pub seed: u64,
}

/// `sup ⟨ξ⟩^m / Re a(x, ξ)` over the grid and `|ξ| ≤ N`; errors unless `Re a > 0`.
pub fn garding_c0(model: &ModelProblem, a: &Symbol, m: f64) -> Result<f64> {
    let n = model.n() as i64;
    let mut c0: f64 = 0.0;
    for xi in -n..=n {
        let w = model.bracket_of(xi).powf(m);
        for (i, v) in a.column(xi).iter().enumerate() {
            if !(v.re > 0.0) {
                return Err(Error::Ellipticity(format!(
                    "Re a = {:.3e} ≤ 0 at xi={xi}, x={}; the symbol is not positive-elliptic",
                    v.re,
                    model.grid()[i]
                )));
            }
            c0 = c0.max(w / v.re);
        }
    }
    Ok(c0)
}

/// Estimates `(C₁, C₂)` in `Re(Au,u) ≥ C₁‖u‖²_{H^{m/2}} − C₂‖u‖²` from random trials.
pub fn garding_estimate(model: &ModelProblem, a: &Symbol, m: f64, trials: usize, seed: u64) -> Result<GardingReport> {
    let c0 = garding_c0(model, a, m)?;
    let matrix = galerkin_matrix(model, a).matrix;
    let gram = model.gram();
    let form_matrix = &gram * &matrix;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients: Vec<CoeffVector> =
        (0..trials).map(|_| random_coefficients(model, CoeffTag::L, &mut rng)).collect();
    let results: Vec<GardingTrial> = coefficients
        .par_iter()
        .map(|c| {
            let v = DVector::from_column_slice(&c.values);
            let form = (v.adjoint() * &form_matrix * &v)[(0, 0)].re;
            let sobolev_sq = sobolev_norm(model, c, m / 2.0)?.powi(2);
            Ok(GardingTrial { form, sobolev_sq, l2_sq: gram_norm_sq(&gram, &c.values) })
        })
        .collect::<Result<_>>()?;
    let deficit = |c1: f64| results.iter().map(|t| (c1 * t.sobolev_sq - t.form) / t.l2_sq).fold(0.0, f64::max);
    let sweep: Vec<(f64, f64)> = (1..=SWEEP_POINTS)
        .map(|j| {
            let c1 = j as f64 / (SWEEP_POINTS as f64 * c0);
            (c1, deficit(c1))
        })
        .collect();
    let best = sweep.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tolerance = 1e-10;
    let (c1, c2) = sweep.iter().rev().find(|s| s.1 <= best + tolerance).copied().unwrap_or((0.0, 0.0));
    let violations =
        results.iter().filter(|t| t.form < c1 * t.sobolev_sq - c2 * t.l2_sq - 1e-12 * t.sobolev_sq.max(1.0)).count();
    Ok(GardingReport { c0, c1, c2, trials: results, violations, pass: violations == 0 && trials > 0, seed })
}

/// `C_ε = max_ξ (⟨ξ⟩^{2t} − ε⟨ξ⟩^{2s})`, floored at zero.
pub fn interpolation_constant(model: &ModelProblem, s: f64, t: f64, eps: f64) -> Result<f64> {
    let ordered = s >= t && t >= 0.0;
    let negative = s < 0.0 && t < 0.0;
    if !(ordered || negative) || !(eps > 0.0) {
        return Err(Error::Usage(format!(
            "interpolation needs s ≥ t ≥ 0 or s, t < 0, and ε > 0; got s={s}, t={t}, ε={eps}"
        )));
    }
    Ok(model
        .indices()
        .iter()
        .map(|&xi| {
            let b = model.bracket_of(xi);
            b.powf(2.0 * t) - eps * b.powf(2.0 * s)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub c_eps: f64,
    pub trials: usize,
    pub violations: usize,
    /// Largest `‖u‖²_t − ε‖u‖²_s − C_ε‖u‖²` seen, normalized by `‖u‖²_t`.
    pub worst_margin: f64,
}

/// Checks `‖u‖²_t ≤ ε‖u‖²_s + C_ε‖u‖²` on random trial vectors.
pub fn interpolation_check(
    model: &ModelProblem,
    s: f64,
    t: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<InterpolationReport> {
    let c_eps = interpolation_constant(model, s, t, eps)?;
    let gram = model.gram();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..trials {
        let c = random_coefficients(model, CoeffTag::L, &mut rng);
        let lhs = sobolev_norm(model, &c, t)?.powi(2);
        let rhs = eps * sobolev_norm(model, &c, s)?.powi(2) + c_eps * gram_norm_sq(&gram, &c.values);
        let margin = (lhs - rhs) / lhs.max(f64::MIN_POSITIVE);
        worst_margin = worst_margin.max(margin);
        if lhs > rhs + 1e-12 * lhs.max(rhs) {
            violations += 1;
        }
    }
    Ok(InterpolationReport { c_eps, trials, violations, worst_margin })
}

/// `‖K_a‖_{L²(M×M)}` from the kernel table, with envelope-exact weights in
/// both variables.
pub fn hilbert_schmidt_norm(model: &ModelProblem, a: &Symbol) -> f64 {
    let k = kernel(model, a);
    let wx = model.envelope_weights(2.0 * model.u_envelope());
    let wy = model.envelope_weights(2.0 * model.v_envelope());
    let q = model.q();
    let sum: f64 = (0..q).map(|i| wx[i] * (0..q).map(|j| wy[j] * k.get(i, j).norm_sqr()).sum::<f64>()).sum();
    sum.max(0.0).sqrt()
}

/// `‖A‖_{L² → L²}` on the truncated span: `σ_max(R M R^{-1})` with `G = R^H R`.
pub fn operator_norm(model: &ModelProblem, matrix: &DMatrix<Complex64>) -> Result<f64> {
    if model.is_self_adjoint() {
        return Ok(matrix.singular_values().max());
    }
    let chol = model
        .gram()
        .cholesky()
        .ok_or_else(|| Error::NumericalConsistency("Gram matrix is not positive definite".into()))?;
    let r = chol.l().adjoint();
    let r_inv = r.clone().try_inverse().ok_or_else(|| Error::SolveFailure("Gram factor is singular".into()))?;
    Ok((r * matrix * r_inv).singular_values().max())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormPoint {
    pub truncation: usize,
    pub quadrature_points: usize,
    pub norm: f64,
    pub hilbert_schmidt: f64,
}

/// Operator norms of `Op(a)` at each truncation, with the template's
/// quadrature raised when a truncation needs more points.
pub fn l2_operator_norm(template: &ModelSpec, sym: &SymbolSpec, truncations: &[usize]) -> Result<Vec<NormPoint>> {
    if truncations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("truncations must be strictly ascending".into()));
    }
    truncations
        .iter()
        .map(|&n| {
            let q = template.quadrature_points.max(4 * n + 4);
            let spec = ModelSpec { truncation: n, quadrature_points: q, ..template.clone() };
            let model = build_model(spec)?;
            let a = sym.build(&model);
            let norm = operator_norm(&model, &galerkin_matrix(&model, &a).matrix)?;
            Ok(NormPoint {
                truncation: n,
                quadrature_points: q,
                norm,
                hilbert_schmidt: hilbert_schmidt_norm(&model, &a),
            })
        })
        .collect()
}

/// Relative growth of the last two norms.
pub fn plateau_growth(points: &[NormPoint]) -> Option<f64> {
    match points {
        [.., a, b] => Some((b.norm - a.norm) / a.norm),
        _ => None,
    }
}
