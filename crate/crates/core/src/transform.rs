//! L-Fourier analysis on a model problem.
//!
//! `fourier` pairs against `v_ξ`, `fourier_star` against `u_ξ`; the inverses
//! synthesize in the `u` and `v` bases respectively. All sums over the index
//! window run in ascending `ξ` order so results are bitwise reproducible.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelProblem;

/// Which transform produced a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffTag {
    /// `f̂(ξ) = (f, v_ξ)`, inverted in the `u` basis.
    L,
    /// `f̂_*(ξ) = (f, u_ξ)`, inverted in the `v` basis.
    LStar,
}

/// Coefficients over the index window `{-N, …, N}`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    pub tag: CoeffTag,
    pub values: Vec<Complex64>,
}

impl CoeffVector {
    pub fn zeros(model: &ModelProblem, tag: CoeffTag) -> Self {
        Self { tag, values: vec![Complex64::new(0.0, 0.0); model.len()] }
    }

    /// Kronecker indicator of `xi`.
    pub fn indicator(model: &ModelProblem, tag: CoeffTag, xi: i64) -> Self {
        let mut c = Self::zeros(model, tag);
        c.values[model.position(xi).expect("index outside the window")] = Complex64::new(1.0, 0.0);
        c
    }

    pub fn get(&self, model: &ModelProblem, xi: i64) -> Complex64 {
        self.values[model.position(xi).expect("index outside the window")]
    }

    fn check(&self, model: &ModelProblem, tag: CoeffTag) -> Result<()> {
        if self.tag != tag {
            return Err(Error::Usage(format!("expected {tag:?} coefficients, got {:?}", self.tag)));
        }
        if self.values.len() != model.len() {
            return Err(Error::Shape { expected: model.len(), got: self.values.len() });
        }
        Ok(())
    }
}

/// Samples on the model grid of a function `e^{γx}·p(x)` with `p` periodic;
/// `envelope` is `γ`. Elements of the `u` span carry `γ = ln h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
    pub envelope: f64,
}

impl GridFunction {
    /// Samples with the envelope of the `u` span.
    pub fn new(model: &ModelProblem, values: Vec<Complex64>) -> Self {
        Self { values, envelope: model.u_envelope() }
    }

    pub fn with_envelope(values: Vec<Complex64>, envelope: f64) -> Self {
        Self { values, envelope }
    }

    pub fn zeros(model: &ModelProblem) -> Self {
        Self::new(model, vec![Complex64::new(0.0, 0.0); model.q()])
    }

    /// Samples `f(x_i)` of a closure; the result is taken to lie in the `u` span class.
    pub fn sample(model: &ModelProblem, f: impl Fn(f64) -> Complex64) -> Self {
        Self::new(model, model.grid().iter().map(|&x| f(x)).collect())
    }

    /// `u_ξ` on the grid.
    pub fn mode(model: &ModelProblem, xi: i64) -> Self {
        Self::new(model, model.u(xi).to_vec())
    }

    /// `v_ξ` on the grid.
    pub fn dual_mode(model: &ModelProblem, xi: i64) -> Self {
        Self::with_envelope(model.v(xi).to_vec(), model.v_envelope())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { values: self.values.iter().map(|z| z * c).collect(), envelope: self.envelope }
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(), envelope: self.envelope }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(), envelope: self.envelope }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check(&self, model: &ModelProblem) -> Result<()> {
        if self.values.len() != model.q() {
            return Err(Error::Shape { expected: model.q(), got: self.values.len() });
        }
        Ok(())
    }
}

fn pair(model: &ModelProblem, f: &GridFunction, basis: &[Complex64], basis_envelope: f64) -> Complex64 {
    let integrand: Vec<Complex64> = f.values.iter().zip(basis).map(|(a, b)| a * b.conj()).collect();
    model.integrate(&integrand, f.envelope + basis_envelope)
}

/// `f̂(ξ) = ∫ f v̄_ξ`.
pub fn fourier(model: &ModelProblem, f: &GridFunction) -> Result<CoeffVector> {
    f.check(model)?;
    let values = model.indices().iter().map(|&xi| pair(model, f, model.v(xi), model.v_envelope())).collect();
    Ok(CoeffVector { tag: CoeffTag::L, values })
}

/// `f̂_*(ξ) = ∫ f ū_ξ`.
pub fn fourier_star(model: &ModelProblem, f: &GridFunction) -> Result<CoeffVector> {
    f.check(model)?;
    let values = model.indices().iter().map(|&xi| pair(model, f, model.u(xi), model.u_envelope())).collect();
    Ok(CoeffVector { tag: CoeffTag::LStar, values })
}

fn synthesize<'a>(model: &ModelProblem, c: &CoeffVector, basis: impl Fn(i64) -> &'a [Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); model.q()];
    for (&xi, &coef) in model.indices().iter().zip(&c.values) {
        for (o, b) in out.iter_mut().zip(basis(xi)) {
            *o += coef * b;
        }
    }
    out
}

/// `f = Σ_ξ c(ξ) u_ξ`.
pub fn inverse(model: &ModelProblem, c: &CoeffVector) -> Result<GridFunction> {
    c.check(model, CoeffTag::L)?;
    Ok(GridFunction::new(model, synthesize(model, c, |xi| model.u(xi))))
}

/// `f = Σ_ξ c(ξ) v_ξ`.
pub fn inverse_star(model: &ModelProblem, c: &CoeffVector) -> Result<GridFunction> {
    c.check(model, CoeffTag::LStar)?;
    Ok(GridFunction::with_envelope(synthesize(model, c, |xi| model.v(xi)), model.v_envelope()))
}

/// Relative tolerance for the near-real assertions on norm sums.
pub const REALNESS_TOLERANCE: f64 = 1e-10;

pub(crate) fn assert_real_nonnegative(sum: Complex64, what: &str) -> Result<f64> {
    let scale = sum.norm().max(1.0);
    if sum.im.abs() > REALNESS_TOLERANCE * scale {
        return Err(Error::NumericalConsistency(format!(
            "{what}: imaginary residue {:.3e} exceeds {:.0e}",
            sum.im, REALNESS_TOLERANCE
        )));
    }
    if sum.re < -REALNESS_TOLERANCE * scale {
        return Err(Error::NumericalConsistency(format!("{what}: negative real part {:.3e}", sum.re)));
    }
    Ok(sum.re.max(0.0))
}

/// Norm of `l²_L`: `(Σ_ξ c(ξ)·conj((F_{L*} F_L^{-1} c)(ξ)))^{1/2}`.
#[allow(non_snake_case)]
pub fn l2L_norm(model: &ModelProblem, c: &CoeffVector) -> Result<f64> {
    c.check(model, CoeffTag::L)?;
    let f = inverse(model, c)?;
    let star = fourier_star(model, &f)?;
    let sum = c.values.iter().zip(&star.values).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj());
    Ok(assert_real_nonnegative(sum, "l2_L norm")?.sqrt())
}

/// Sobolev norm `(Σ_ξ ⟨ξ⟩^{2s} f̂(ξ) conj(f̂_*(ξ)))^{1/2}` with `f̂_*`
/// recomputed from the reconstructed function.
pub fn sobolev_norm(model: &ModelProblem, c: &CoeffVector, s: f64) -> Result<f64> {
    c.check(model, CoeffTag::L)?;
    let f = inverse(model, c)?;
    let star = fourier_star(model, &f)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for ((&xi, a), b) in model.indices().iter().zip(&c.values).zip(&star.values) {
        sum += a * b.conj() * model.bracket_of(xi).powf(2.0 * s);
    }
    Ok(assert_real_nonnegative(sum, "sobolev norm")?.sqrt())
}

/// `(f, g)_{L²}` by envelope-exact quadrature.
pub fn inner(model: &ModelProblem, f: &GridFunction, g: &GridFunction) -> Complex64 {
    let integrand: Vec<Complex64> = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).collect();
    model.integrate(&integrand, f.envelope + g.envelope)
}

/// `‖f‖_{L²}`.
pub fn l2_norm(model: &ModelProblem, f: &GridFunction) -> f64 {
    inner(model, f, f).re.max(0.0).sqrt()
}

/// `(f ⋆_L g) = Σ_ξ f̂(ξ) ĝ(ξ) u_ξ`.
pub fn l_convolution(model: &ModelProblem, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    let fh = fourier(model, f)?;
    let gh = fourier(model, g)?;
    let values = fh.values.iter().zip(&gh.values).map(|(a, b)| a * b).collect();
    inverse(model, &CoeffVector { tag: CoeffTag::L, values })
}

/// Frame bounds on the truncated span: for every `f = Σ c_ξ u_ξ`,
/// `lower·‖f‖² ≤ Σ|f̂|² ≤ upper·‖f‖²` and `star_lower·‖f‖² ≤ Σ|f̂_*|² ≤ star_upper·‖f‖²`.
#[derive(Debug, Clone, Copy)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
    pub star_lower: f64,
    pub star_upper: f64,
}

/// Frame bounds from the spectrum of the Gram matrix `G`: `Σ|f̂|² = c*c`,
/// `‖f‖² = c*Gc` and `Σ|f̂_*|² = c*G²c`.
pub fn frame_bounds(model: &ModelProblem) -> FrameBounds {
    let eig = model.gram().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    FrameBounds { lower: 1.0 / hi, upper: 1.0 / lo, star_lower: lo, star_upper: hi }
}

/// Coefficient vector with independent complex standard normal entries.
pub fn random_coefficients<R: Rng + ?Sized>(model: &ModelProblem, tag: CoeffTag, rng: &mut R) -> CoeffVector {
    let values = (0..model.len())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    CoeffVector { tag, values }
}

/// Random element of the truncated `u` span.
pub fn random_band_limited<R: Rng + ?Sized>(model: &ModelProblem, rng: &mut R) -> GridFunction {
    inverse(model, &random_coefficients(model, CoeffTag::L, rng)).expect("tag and length are consistent")
}

/// Coefficient vector as a column.
pub fn as_column(c: &CoeffVector) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(&c.values)
}

/// `‖f‖²_{L²}` for `f = Σ c_ξ u_ξ` through the Gram matrix.
pub fn gram_norm_sq(gram: &DMatrix<Complex64>, c: &[Complex64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(c);
    (v.adjoint() * gram * &v)[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{build_model, ModelSpec};

    fn models() -> Vec<ModelProblem> {
        vec![
            build_model(ModelSpec::torus_derivative(6, 26)).unwrap(),
            build_model(ModelSpec::h_derivative(2.0, 6, 26)).unwrap(),
            build_model(ModelSpec::h_derivative(0.5, 6, 27)).unwrap(),
            build_model(ModelSpec::torus_laplacian(6, 32)).unwrap(),
        ]
    }

    fn assert_indicator(model: &ModelProblem, c: &CoeffVector, xi: i64, tol: f64) {
        for &k in model.indices() {
            let expected = if k == xi { 1.0 } else { 0.0 };
            assert!((c.get(model, k) - expected).norm() < tol, "xi={k}: {}", c.get(model, k));
        }
    }

    #[test]
    fn transforms_of_modes() {
        for model in models() {
            let f = GridFunction::mode(&model, 1);
            assert_indicator(&model, &fourier(&model, &f).unwrap(), 1, 1e-13);
            let g = GridFunction::dual_mode(&model, 1);
            assert_indicator(&model, &fourier_star(&model, &g).unwrap(), 1, 1e-13);
            let u0 = GridFunction::mode(&model, 0);
            assert_indicator(&model, &fourier(&model, &u0).unwrap(), 0, 1e-13);
        }
        let torus = build_model(ModelSpec::torus_derivative(4, 18)).unwrap();
        let one = GridFunction::sample(&torus, |_| Complex64::new(1.0, 0.0));
        assert_indicator(&torus, &fourier(&torus, &one).unwrap(), 0, 1e-15);
    }

    #[test]
    fn fourier_star_of_weighted_mode() {
        let model = build_model(ModelSpec::h_derivative(2.0, 5, 22)).unwrap();
        let u0 = GridFunction::mode(&model, 0);
        let star = fourier_star(&model, &u0).unwrap();
        let rate = 2.0 * 2f64.ln();
        for &xi in model.indices() {
            let exact = Complex64::new(rate.exp_m1(), 0.0) / Complex64::new(rate, -2.0 * PI * xi as f64);
            assert!((star.get(&model, xi) - exact).norm() < 1e-13);
            assert!(exact.norm() > 0.01);
        }
        let torus = build_model(ModelSpec::torus_laplacian(5, 22)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_band_limited(&torus, &mut rng);
        assert_eq!(fourier(&torus, &f).unwrap().values, fourier_star(&torus, &f).unwrap().values);
    }

    #[test]
    fn inversion_and_tags() {
        let model = build_model(ModelSpec::h_derivative(2.0, 4, 18)).unwrap();
        let c = CoeffVector::indicator(&model, CoeffTag::L, 1);
        assert_eq!(inverse(&model, &c).unwrap().values, model.u(1));
        let cs = CoeffVector::indicator(&model, CoeffTag::LStar, 1);
        assert_eq!(inverse_star(&model, &cs).unwrap().values, model.v(1));
        assert!(matches!(inverse(&model, &cs), Err(Error::Usage(_))));
        assert!(matches!(inverse_star(&model, &c), Err(Error::Usage(_))));
        let zero = inverse(&model, &CoeffVector::zeros(&model, CoeffTag::L)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let short = GridFunction::new(&model, vec![Complex64::new(0.0, 0.0); 3]);
        assert!(matches!(fourier(&model, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn roundtrip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in models() {
            for _ in 0..5 {
                let c = random_coefficients(&model, CoeffTag::L, &mut rng);
                let f = inverse(&model, &c).unwrap();
                let back = fourier(&model, &f).unwrap();
                let err = c.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12);
                let lhs = l2L_norm(&model, &back).unwrap();
                assert!((lhs - l2_norm(&model, &f)).abs() < 1e-10);
                let cs = random_coefficients(&model, CoeffTag::LStar, &mut rng);
                let g = inverse_star(&model, &cs).unwrap();
                let back = fourier_star(&model, &g).unwrap();
                let err = cs.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12);
            }
        }
    }

    #[test]
    fn single_mode_norm_on_h_model() {
        let model = build_model(ModelSpec::h_derivative(2.0, 4, 18)).unwrap();
        let c = CoeffVector::indicator(&model, CoeffTag::L, 0);
        let expected = (3.0 / (2.0 * 2f64.ln())).sqrt();
        assert!((l2L_norm(&model, &c).unwrap() - expected).abs() < 1e-12);
        let torus = build_model(ModelSpec::torus_derivative(4, 18)).unwrap();
        let c = CoeffVector::indicator(&torus, CoeffTag::L, 1);
        assert!((l2L_norm(&torus, &c).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sobolev_examples() {
        let torus = build_model(ModelSpec::torus_derivative(4, 18)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_coefficients(&torus, CoeffTag::L, &mut rng);
        assert!((sobolev_norm(&torus, &c, 0.0).unwrap() - l2L_norm(&torus, &c).unwrap()).abs() < 1e-13);
        let u1 = CoeffVector::indicator(&torus, CoeffTag::L, 1);
        assert!((sobolev_norm(&torus, &u1, 1.0).unwrap() - (1.0 + 4.0 * PI * PI).sqrt()).abs() < 1e-12);
        let u0 = CoeffVector::indicator(&torus, CoeffTag::L, 0);
        for s in [-2.0, 0.5, 3.0] {
            assert!((sobolev_norm(&torus, &u0, s).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sobolev_sum_is_not_real_on_h_models() {
        // The weighted pairing with the dense Gram matrix is not Hermitian,
        // so the consistency assertion has to fire rather than clamp.
        let model = build_model(ModelSpec::h_derivative(2.0, 4, 18)).unwrap();
        let mut c = CoeffVector::zeros(&model, CoeffTag::L);
        c.values[model.position(0).unwrap()] = Complex64::new(1.0, 0.0);
        c.values[model.position(1).unwrap()] = Complex64::new(1.0, 0.0);
        assert!(matches!(sobolev_norm(&model, &c, 1.0), Err(Error::NumericalConsistency(_))));
        assert!(sobolev_norm(&model, &c, 0.0).is_ok());
    }

    #[test]
    fn convolution_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in models() {
            let u1 = GridFunction::mode(&model, 1);
            let u2 = GridFunction::mode(&model, 2);
            assert!(l_convolution(&model, &u1, &u2).unwrap().max_abs() < 1e-12);
            let same = l_convolution(&model, &u1, &u1).unwrap();
            assert!(same.sub(&u1).max_abs() < 1e-12);
            let f = random_band_limited(&model, &mut rng);
            let g = random_band_limited(&model, &mut rng);
            let fg = l_convolution(&model, &f, &g).unwrap();
            let gf = l_convolution(&model, &g, &f).unwrap();
            assert!(fg.sub(&gf).max_abs() < 1e-12);
            let hat = fourier(&model, &fg).unwrap();
            let fh = fourier(&model, &f).unwrap();
            let gh = fourier(&model, &g).unwrap();
            for k in 0..model.len() {
                assert!((hat.values[k] - fh.values[k] * gh.values[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn frame_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in models() {
            let bounds = frame_bounds(&model);
            if model.is_self_adjoint() {
                assert!((bounds.lower - 1.0).abs() < 1e-12 && (bounds.upper - 1.0).abs() < 1e-12);
            }
            for _ in 0..20 {
                let f = random_band_limited(&model, &mut rng);
                let norm_sq = l2_norm(&model, &f).powi(2);
                let direct: f64 = fourier(&model, &f).unwrap().values.iter().map(|z| z.norm_sqr()).sum();
                let star: f64 = fourier_star(&model, &f).unwrap().values.iter().map(|z| z.norm_sqr()).sum();
                let tol = 1e-10 * norm_sq;
                assert!(bounds.lower * norm_sq <= direct + tol && direct <= bounds.upper * norm_sq + tol);
                assert!(bounds.star_lower * norm_sq <= star + tol && star <= bounds.star_upper * norm_sq + tol);
            }
        }
    }
}
