//! Quantization `Op(a)f = Σ_ξ u_ξ a(·,ξ) f̂(ξ)`, symbol extraction, kernels,
//! Galerkin sections, and truncated composition/adjoint expansions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelProblem;
use crate::symbols::{DifferenceCalculus, Symbol};
use crate::transform::{fourier, CoeffTag, CoeffVector, GridFunction};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Smallest `|u_ξ(x_i)|` accepted by symbol extraction.
pub const WZ_FLOOR: f64 = 1e-12;

/// `(Op(a) f)(x_i)`.
pub fn op_apply(model: &ModelProblem, sym: &Symbol, f: &GridFunction) -> Result<GridFunction> {
    let coeffs = fourier(model, f)?;
    apply_to_coefficients(model, sym, &coeffs)
}

/// `Σ_ξ u_ξ a(·,ξ) c(ξ)` for `L` coefficients.
pub fn apply_to_coefficients(model: &ModelProblem, sym: &Symbol, c: &CoeffVector) -> Result<GridFunction> {
    if c.tag != CoeffTag::L {
        return Err(Error::Usage("quantization acts on L coefficients".into()));
    }
    if c.values.len() != model.len() {
        return Err(Error::Shape { expected: model.len(), got: c.values.len() });
    }
    let mut out = vec![ZERO; model.q()];
    for (&xi, &coef) in model.indices().iter().zip(&c.values) {
        if coef == ZERO {
            continue;
        }
        for (i, (o, u)) in out.iter_mut().zip(model.u(xi)).enumerate() {
            *o += u * sym.get(xi, i) * coef;
        }
    }
    Ok(GridFunction::new(model, out))
}

/// `σ_A(x_i, ξ) = (A u_ξ)(x_i) / u_ξ(x_i)` for `|ξ| ≤ N + margin`; `apply`
/// returns grid samples of `A u_ξ`.
pub fn extract_symbol<F>(model: &ModelProblem, margin: usize, apply: F) -> Result<Symbol>
where
    F: Fn(i64) -> Result<Vec<Complex64>> + Sync,
{
    let reach = (model.n() + margin) as i64;
    let columns: Vec<Vec<Complex64>> = (-reach..=reach)
        .into_par_iter()
        .map(|xi| {
            let image = apply(xi)?;
            if image.len() != model.q() {
                return Err(Error::Shape { expected: model.q(), got: image.len() });
            }
            image
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let u = model.u_at(xi, i);
                    if u.norm() < WZ_FLOOR {
                        return Err(Error::WzViolation { xi, grid_index: i });
                    }
                    Ok(w / u)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Symbol::from_columns(model, margin, columns)
}

/// Symbol of `Op(a)` recovered through `op_apply` on each `u_ξ` of the window.
pub fn roundtrip_symbol(model: &ModelProblem, sym: &Symbol) -> Result<Symbol> {
    let out = extract_symbol(model, 0, |xi| Ok(op_apply(model, sym, &GridFunction::mode(model, xi))?.values))?;
    Ok(out.with_order(sym.order()).with_class(sym.rho(), sym.delta()).with_label(sym.label()))
}

/// Symbol of the operator whose Galerkin section is `matrix`:
/// `σ(x, ξ) = Σ_η M[η, ξ] u_η(x) / u_ξ(x)`.
pub fn symbol_from_matrix(model: &ModelProblem, matrix: &DMatrix<Complex64>) -> Result<Symbol> {
    check_square(model, matrix)?;
    let idx = model.indices();
    extract_symbol(model, 0, |xi| {
        let col = model.position(xi).expect("extraction stays inside the window");
        let mut out = vec![ZERO; model.q()];
        for (r, &eta) in idx.iter().enumerate() {
            let m = matrix[(r, col)];
            if m == ZERO {
                continue;
            }
            for (o, u) in out.iter_mut().zip(model.u(eta)) {
                *o += m * u;
            }
        }
        Ok(out)
    })
}

/// Symbol of the exact adjoint against the dual basis:
/// `τ(x, ξ) = Σ_η conj(M[ξ, η]) v_η(x) / v_ξ(x)`.
pub fn adjoint_symbol_exact(model: &ModelProblem, matrix: &DMatrix<Complex64>) -> Result<Symbol> {
    check_square(model, matrix)?;
    let idx = model.indices();
    let columns: Vec<Vec<Complex64>> = idx
        .par_iter()
        .enumerate()
        .map(|(row, &xi)| {
            let mut out = vec![ZERO; model.q()];
            for (c, &eta) in idx.iter().enumerate() {
                let m = matrix[(row, c)].conj();
                if m == ZERO {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(model.v(eta)) {
                    *o += m * v;
                }
            }
            out.iter().zip(model.v(xi)).map(|(o, v)| o / v).collect()
        })
        .collect();
    Symbol::from_columns(model, 0, columns)
}

fn check_square(model: &ModelProblem, matrix: &DMatrix<Complex64>) -> Result<()> {
    if matrix.nrows() != model.len() || matrix.ncols() != model.len() {
        return Err(Error::Shape { expected: model.len(), got: matrix.nrows().max(matrix.ncols()) });
    }
    Ok(())
}

/// Samples `K(x_i, y_j)`, row-major in `x`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub q: usize,
    pub values: Vec<Complex64>,
}

impl KernelTable {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.q + j]
    }

    /// `∫ K(x_i, y) f(y) dy` by quadrature in `y`.
    pub fn apply(&self, model: &ModelProblem, f: &GridFunction) -> Result<GridFunction> {
        f.check(model)?;
        let w = model.envelope_weights(f.envelope + model.v_envelope());
        let out = (0..self.q)
            .map(|i| {
                let row = &self.values[i * self.q..(i + 1) * self.q];
                row.iter().zip(&f.values).zip(w.iter()).fold(ZERO, |acc, ((k, g), w)| acc + k * g * *w)
            })
            .collect();
        Ok(GridFunction::new(model, out))
    }
}

/// `K(x, y) = Σ_ξ u_ξ(x) σ(x, ξ) conj(v_ξ(y))`.
pub fn kernel(model: &ModelProblem, sym: &Symbol) -> KernelTable {
    let q = model.q();
    let values = (0..q)
        .into_par_iter()
        .flat_map_iter(|i| {
            let amp: Vec<Complex64> = model.indices().iter().map(|&xi| model.u_at(xi, i) * sym.get(xi, i)).collect();
            (0..q).map(move |j| {
                model.indices().iter().zip(&amp).fold(ZERO, |acc, (&xi, a)| acc + a * model.v_at(xi, j).conj())
            })
        })
        .collect();
    KernelTable { q, values }
}

/// Finite section `M[η, ξ] = (Op(a) u_ξ, v_η)` over the index window.
#[derive(Debug, Clone)]
pub struct GalerkinMatrix {
    pub matrix: DMatrix<Complex64>,
    pub label: String,
}

impl GalerkinMatrix {
    pub fn identity(model: &ModelProblem) -> Self {
        Self { matrix: DMatrix::identity(model.len(), model.len()), label: "identity".into() }
    }

    /// Coefficients of the image: `(Op(a) f)^(η) = Σ_ξ M[η, ξ] f̂(ξ)`.
    pub fn apply(&self, c: &CoeffVector) -> CoeffVector {
        let v = nalgebra::DVector::from_column_slice(&c.values);
        CoeffVector { tag: CoeffTag::L, values: (&self.matrix * v).as_slice().to_vec() }
    }

    /// Section of the product `Op(self) ∘ Op(other)`.
    pub fn compose(&self, other: &GalerkinMatrix) -> Self {
        Self { matrix: &self.matrix * &other.matrix, label: format!("({})∘({})", self.label, other.label) }
    }

    pub fn is_diagonal(&self) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == ZERO))
    }
}

/// Galerkin section of `Op(a)`. Symbols constant in `x` give an exactly
/// diagonal matrix.
pub fn galerkin_matrix(model: &ModelProblem, sym: &Symbol) -> GalerkinMatrix {
    let len = model.len();
    let q = model.q() as i64;
    let idx = model.indices();
    let multiplier = sym.is_multiplier();
    let columns: Vec<Vec<Complex64>> = idx
        .par_iter()
        .map(|&xi| {
            let col = sym.column(xi);
            if multiplier {
                return idx.iter().map(|&eta| if eta == xi { col[0] } else { ZERO }).collect();
            }
            // u_ξ conj(v_η) = e^{2πi(ξ-η)x}; the envelopes cancel exactly
            idx.iter()
                .map(|&eta| {
                    let sum = col.iter().enumerate().fold(ZERO, |acc, (i, a)| {
                        let k = ((xi - eta) * i as i64).rem_euclid(q);
                        acc + a * Complex64::cis(2.0 * std::f64::consts::PI * k as f64 / q as f64)
                    });
                    sum / q as f64
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(len, len, |r, c| columns[c][r]);
    GalerkinMatrix { matrix, label: sym.label().to_string() }
}

/// `Σ_{α < terms} (1/α!) Δ^α a · D^(α) b`.
pub fn compose_symbols(calc: &DifferenceCalculus<'_>, a: &Symbol, b: &Symbol, terms: usize) -> Result<Symbol> {
    if terms == 0 {
        return Err(Error::Usage("composition needs at least one term".into()));
    }
    let mut total = a.mul(b);
    let mut factorial = 1.0;
    for alpha in 1..terms {
        factorial *= alpha as f64;
        let term = calc.delta(a, alpha)?.mul(&calc.derivative(b, alpha)?);
        total = total.add(&term.scale(Complex64::new(1.0 / factorial, 0.0)));
    }
    let rho = a.rho().min(b.rho());
    let delta = a.delta().max(b.delta());
    Ok(total.with_order(a.order() + b.order()).with_class(rho, delta).with_label(format!(
        "compose({},{})",
        a.label(),
        b.label()
    )))
}

/// `Σ_{α < terms} (1/α!) Δ̃^α D^(α) conj(a)`.
pub fn adjoint_symbol(calc: &DifferenceCalculus<'_>, a: &Symbol, terms: usize) -> Result<Symbol> {
    if terms == 0 {
        return Err(Error::Usage("adjoint expansion needs at least one term".into()));
    }
    let conj = a.conj();
    let mut total = conj.clone();
    let mut factorial = 1.0;
    for alpha in 1..terms {
        factorial *= alpha as f64;
        let term = calc.delta_star(&calc.derivative(&conj, alpha)?, alpha)?;
        total = total.add(&term.scale(Complex64::new(1.0 / factorial, 0.0)));
    }
    Ok(total.with_order(a.order()).with_class(a.rho(), a.delta()).with_label(format!("adjoint({})", a.label())))
}

/// `σ_{AB}` from the product of Galerkin sections.
pub fn exact_composition(model: &ModelProblem, a: &Symbol, b: &Symbol) -> Result<Symbol> {
    let product = galerkin_matrix(model, a).compose(&galerkin_matrix(model, b));
    symbol_from_matrix(model, &product.matrix)
}

/// Remainder of the truncated composition against the exact one per `terms`:
/// `(terms, sup |σ_AB - σ^(terms)|, weighted sup)` over `|ξ| ≤ N/2`.
pub fn composition_remainders(
    calc: &DifferenceCalculus<'_>,
    a: &Symbol,
    b: &Symbol,
    max_terms: usize,
) -> Result<Vec<(usize, f64, f64)>> {
    let model = calc.model();
    let exact = exact_composition(model, a, b)?;
    let inner = model.n() as i64 / 2;
    let gain = a.rho().min(b.rho()) - a.delta().max(b.delta());
    (1..=max_terms)
        .map(|terms| {
            let approx = compose_symbols(calc, a, b, terms)?;
            let diff = exact.sub(&approx);
            let plain = diff.weighted_sup(inner, |_| 1.0);
            let exponent = -(a.order() + b.order()) + gain * terms as f64;
            let weighted = diff.weighted_sup(inner, |xi| model.bracket_of(xi).powf(exponent));
            Ok((terms, plain, weighted))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{build_model, ModelSpec};
    use crate::symbols::SymbolSpec;
    use crate::transform::random_band_limited;

    fn models() -> Vec<ModelProblem> {
        vec![
            build_model(ModelSpec::torus_derivative(8, 48)).unwrap(),
            build_model(ModelSpec::h_derivative(2.0, 8, 48)).unwrap(),
            build_model(ModelSpec::h_derivative(0.5, 8, 48)).unwrap(),
            build_model(ModelSpec::torus_laplacian(8, 48)).unwrap(),
        ]
    }

    fn registered() -> Vec<SymbolSpec> {
        vec![
            SymbolSpec::Constant { value: 2.5 },
            SymbolSpec::BracketPower { s: 2.0, scale: 1.0 },
            SymbolSpec::LambdaMultiplier,
            SymbolSpec::ModulatedBracketPower { s: 1.0, amplitude: 0.5, scale: 1.0 },
            SymbolSpec::ExpModulated { s: 0.0, frequency: 1 },
        ]
    }

    #[test]
    fn op_apply_examples() {
        let model = build_model(ModelSpec::torus_derivative(4, 20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_band_limited(&model, &mut rng);
        let id = SymbolSpec::Constant { value: 1.0 }.build(&model);
        assert!(op_apply(&model, &id, &f).unwrap().sub(&f).max_abs() < 1e-13);

        let u1 = GridFunction::mode(&model, 1);
        let lam = SymbolSpec::LambdaMultiplier.build(&model);
        let out = op_apply(&model, &lam, &u1).unwrap();
        assert!(out.sub(&u1.scale(Complex64::new(2.0 * PI, 0.0))).max_abs() < 1e-12);

        let shift = SymbolSpec::ExpModulated { s: 0.0, frequency: 1 }.build(&model);
        let out = op_apply(&model, &shift, &u1).unwrap();
        assert!(out.sub(&GridFunction::mode(&model, 2)).max_abs() < 1e-13);

        assert!(matches!(op_apply(&model, &id, &GridFunction::new(&model, vec![ZERO; 3])), Err(Error::Shape { .. })));
    }

    #[test]
    fn extraction_roundtrip() {
        for model in models() {
            for spec in registered() {
                let a = spec.build(&model);
                let back = roundtrip_symbol(&model, &a).unwrap();
                let err = back.sup_distance(&a, model.n() as i64);
                assert!(err < 1e-11, "{:?} {spec:?}: {err}", model.kind());
            }
        }
    }

    #[test]
    fn extraction_examples() {
        let model = build_model(ModelSpec::h_derivative(2.0, 4, 20)).unwrap();
        let lam =
            extract_symbol(&model, 0, |xi| Ok(model.u(xi).iter().map(|u| u * model.eigenvalue(xi)).collect())).unwrap();
        let ident = extract_symbol(&model, 0, |xi| Ok(model.u(xi).to_vec())).unwrap();
        for xi in -4..=4 {
            for i in 0..model.q() {
                assert!((lam.get(xi, i) - model.eigenvalue(xi)).norm() < 1e-12);
                assert!((ident.get(xi, i) - 1.0).norm() < 1e-15);
            }
        }
        let bad = extract_symbol(&model, 0, |_| Ok(vec![ZERO; 2]));
        assert!(matches!(bad, Err(Error::Shape { .. })));
    }

    #[test]
    fn galerkin_examples() {
        let model = build_model(ModelSpec::torus_derivative(4, 20)).unwrap();
        let id = galerkin_matrix(&model, &SymbolSpec::Constant { value: 1.0 }.build(&model));
        assert_eq!(id.matrix, DMatrix::identity(9, 9));
        let br = SymbolSpec::BracketPower { s: 2.0, scale: 1.0 }.build(&model);
        let m = galerkin_matrix(&model, &br);
        assert!(m.is_diagonal());
        assert_eq!(m.matrix[(0, 0)], br.get(-4, 0));
        let shift = galerkin_matrix(&model, &SymbolSpec::ExpModulated { s: 0.0, frequency: 1 }.build(&model));
        for r in 0..9 {
            for c in 0..9 {
                let expected = if r == c + 1 { 1.0 } else { 0.0 };
                assert!((shift.matrix[(r, c)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in models() {
            for spec in registered() {
                let a = spec.build(&model);
                let m = galerkin_matrix(&model, &a);
                let k = kernel(&model, &a);
                for _ in 0..3 {
                    let f = random_band_limited(&model, &mut rng);
                    let direct = op_apply(&model, &a, &f).unwrap();
                    let by_matrix = fourier(&model, &direct).unwrap();
                    let predicted = m.apply(&fourier(&model, &f).unwrap());
                    let scale = direct.max_abs().max(1.0);
                    let err =
                        by_matrix.values.iter().zip(&predicted.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                    assert!(err < 1e-10 * scale, "{:?} {spec:?}: galerkin {err}", model.kind());
                    let via_kernel = k.apply(&model, &f).unwrap();
                    assert!(via_kernel.sub(&direct).max_abs() < 1e-8 * scale, "{:?} {spec:?}: kernel", model.kind());
                }
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let model = build_model(ModelSpec::h_derivative(2.0, 3, 16)).unwrap();
        let one = kernel(&model, &SymbolSpec::Constant { value: 1.0 }.build(&model));
        let ind = kernel(&model, &SymbolSpec::Indicator { xi: 1 }.build(&model));
        for i in 0..16 {
            for j in 0..16 {
                let x = model.grid()[i];
                let y = model.grid()[j];
                let dirichlet: Complex64 = (-3..=3).map(|k| Complex64::cis(2.0 * PI * k as f64 * (x - y))).sum();
                assert!((one.get(i, j) - dirichlet * 2f64.powf(x - y)).norm() < 1e-12);
                assert!((ind.get(i, j) - model.u_at(1, i) * model.v_at(1, j).conj()).norm() < 1e-14);
            }
        }
        let f = GridFunction::mode(&model, 2).add(&GridFunction::mode(&model, -1));
        assert!(one.apply(&model, &f).unwrap().sub(&f).max_abs() < 1e-8);
    }

    #[test]
    fn composition_examples() {
        let model = build_model(ModelSpec::torus_derivative(8, 40)).unwrap();
        let calc = DifferenceCalculus::standard(&model);
        let a = SymbolSpec::BracketPower { s: 2.0, scale: 1.0 }.build(&model);
        let b = SymbolSpec::LambdaMultiplier.build(&model);
        for terms in 1..=3 {
            let c = compose_symbols(&calc, &a, &b, terms).unwrap();
            assert!(c.sup_distance(&a.mul(&b), 8) == 0.0);
        }

        let a = SymbolSpec::BracketPower { s: 1.0, scale: 1.0 }.build(&model);
        let b = SymbolSpec::ExpModulated { s: 0.0, frequency: 1 }.build(&model);
        let two = compose_symbols(&calc, &a, &b, 2).unwrap();
        let one = compose_symbols(&calc, &a, &b, 1).unwrap();
        let term = two.sub(&one);
        for xi in -8..=8 {
            for (i, &x) in model.grid().iter().enumerate() {
                let expected = Complex64::cis(2.0 * PI * x) * (model.bracket_of(xi + 1) - model.bracket_of(xi));
                assert!((term.get(xi, i) - expected).norm() < 1e-11);
            }
        }
        let rem = composition_remainders(&calc, &a, &b, 3).unwrap();
        assert!(rem[0].2 > 1.0);
        assert!(rem[1].2 < 1e-10 && rem[2].2 < 1e-10);
        assert!(matches!(compose_symbols(&calc, &a, &b, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn adjoint_examples() {
        let torus = build_model(ModelSpec::torus_derivative(6, 32)).unwrap();
        let calc = DifferenceCalculus::standard(&torus);
        let a = SymbolSpec::BracketPower { s: 1.0, scale: 1.0 }.build(&torus);
        let tau = adjoint_symbol(&calc, &a, 2).unwrap();
        assert!(tau.sup_distance(&a, 6) < 1e-12);
        let exact = adjoint_symbol_exact(&torus, &galerkin_matrix(&torus, &a).matrix).unwrap();
        assert!(exact.sup_distance(&a, 6) < 1e-12);

        let h = build_model(ModelSpec::h_derivative(2.0, 6, 32)).unwrap();
        let lam = SymbolSpec::LambdaMultiplier.build(&h);
        let exact = adjoint_symbol_exact(&h, &galerkin_matrix(&h, &lam).matrix).unwrap();
        for xi in -6..=6 {
            assert!((exact.get(xi, 5) - h.eigenvalue(xi).conj()).norm() < 1e-12);
        }

        let shift = SymbolSpec::ExpModulated { s: 0.0, frequency: 1 }.build(&torus);
        let lead = adjoint_symbol(&calc, &shift, 1).unwrap();
        let exact = adjoint_symbol_exact(&torus, &galerkin_matrix(&torus, &shift).matrix).unwrap();
        for (i, &x) in torus.grid().iter().enumerate() {
            assert!((lead.get(2, i) - Complex64::cis(-2.0 * PI * x)).norm() < 1e-14);
        }
        assert!(lead.sup_distance(&exact.clone(), 3) < 1e-12);
    }
}
