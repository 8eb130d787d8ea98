//! Symbols, difference operators `Δ^α`, the derivatives `D^(β)` and
//! symbol-class seminorms.
//!
//! A [`Symbol`] is a table of samples `a(x_i, ξ)` over the grid and an
//! extended index window `{-N-K, …, N+K}`. The margin `K` is consumed by
//! difference operators, which read `a(x, ξ+α)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{linear_fit, ModelProblem};

/// Default extension margin of registry symbols.
pub const DEFAULT_MARGIN: usize = 4;

/// Everything a symbol evaluator may depend on at one sample.
#[derive(Debug, Clone, Copy)]
pub struct SymbolPoint {
    pub x: f64,
    pub grid_index: usize,
    pub xi: i64,
    pub lambda: Complex64,
    pub bracket: f64,
}

/// Sampled symbol `a(x_i, ξ)` on the grid × extended window.
#[derive(Debug, Clone)]
pub struct Symbol {
    label: String,
    order: f64,
    rho: f64,
    delta: f64,
    n: usize,
    q: usize,
    margin: usize,
    values: Vec<Complex64>,
}

impl Symbol {
    /// Samples an evaluator on `{-N-margin, …, N+margin}`. Declared class
    /// defaults to `S^0_{1,0}`.
    pub fn from_fn(model: &ModelProblem, margin: usize, f: impl Fn(&SymbolPoint) -> Complex64) -> Self {
        let n = model.n();
        let q = model.q();
        let reach = (n + margin) as i64;
        let mut values = Vec::with_capacity((2 * reach as usize + 1) * q);
        for xi in -reach..=reach {
            let lambda = model.eigenvalue(xi);
            let bracket = model.bracket_of(xi);
            for (i, &x) in model.grid().iter().enumerate() {
                values.push(f(&SymbolPoint { x, grid_index: i, xi, lambda, bracket }));
            }
        }
        Self { label: String::from("symbol"), order: 0.0, rho: 1.0, delta: 0.0, n, q, margin, values }
    }

    /// Symbol from per-`ξ` grid columns over `{-N-margin, …, N+margin}`.
    pub fn from_columns(model: &ModelProblem, margin: usize, columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let expected = 2 * (model.n() + margin) + 1;
        if columns.len() != expected {
            return Err(Error::Shape { expected, got: columns.len() });
        }
        let mut values = Vec::with_capacity(expected * model.q());
        for c in columns {
            if c.len() != model.q() {
                return Err(Error::Shape { expected: model.q(), got: c.len() });
            }
            values.extend(c);
        }
        Ok(Self {
            label: String::from("symbol"),
            order: 0.0,
            rho: 1.0,
            delta: 0.0,
            n: model.n(),
            q: model.q(),
            margin,
            values,
        })
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn with_class(mut self, rho: f64, delta: f64) -> Self {
        self.rho = rho;
        self.delta = delta;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Largest `|ξ|` the table covers.
    pub fn reach(&self) -> i64 {
        (self.n + self.margin) as i64
    }

    pub fn covers(&self, xi: i64) -> bool {
        xi.abs() <= self.reach()
    }

    /// Indices of the extended window, ascending.
    pub fn indices(&self) -> impl Iterator<Item = i64> {
        -self.reach()..=self.reach()
    }

    fn row(&self, xi: i64) -> usize {
        assert!(self.covers(xi), "index {xi} outside the symbol window ±{}", self.reach());
        (xi + self.reach()) as usize
    }

    /// `a(x_i, ξ)`.
    pub fn get(&self, xi: i64, i: usize) -> Complex64 {
        self.values[self.row(xi) * self.q + i]
    }

    /// Grid samples of `a(·, ξ)`.
    pub fn column(&self, xi: i64) -> &[Complex64] {
        let r = self.row(xi);
        &self.values[r * self.q..(r + 1) * self.q]
    }

    /// True when every column is constant in `x` (bitwise).
    pub fn is_multiplier(&self) -> bool {
        self.values.chunks(self.q).all(|c| c.iter().all(|z| *z == c[0]))
    }

    fn with_values(&self, margin: usize, values: Vec<Complex64>) -> Self {
        Self {
            label: self.label.clone(),
            order: self.order,
            rho: self.rho,
            delta: self.delta,
            n: self.n,
            q: self.q,
            margin,
            values,
        }
    }

    /// Restriction to a smaller margin.
    pub fn restrict(&self, margin: usize) -> Result<Self> {
        if margin > self.margin {
            return Err(Error::Extension { needed: margin, available: self.margin });
        }
        let drop = (self.margin - margin) * self.q;
        let end = self.values.len() - drop;
        Ok(self.with_values(margin, self.values[drop..end].to_vec()))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        self.with_values(self.margin, self.values.iter().map(|&z| f(z)).collect())
    }

    /// Pointwise combination on the common window.
    pub fn zip_with(&self, other: &Symbol, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!((self.n, self.q), (other.n, other.q), "symbols belong to different models");
        let margin = self.margin.min(other.margin);
        let a = self.restrict(margin).expect("margin is the minimum");
        let b = other.restrict(margin).expect("margin is the minimum");
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
        self.with_values(margin, values)
    }

    pub fn add(&self, other: &Symbol) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Symbol) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Symbol) -> Self {
        self.zip_with(other, |a, b| a * b).with_order(self.order + other.order)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// `sup |a - b|` over the grid and `|ξ| ≤ limit`.
    pub fn sup_distance(&self, other: &Symbol, limit: i64) -> f64 {
        let mut sup: f64 = 0.0;
        for xi in -limit..=limit {
            for (a, b) in self.column(xi).iter().zip(other.column(xi)) {
                sup = sup.max((a - b).norm());
            }
        }
        sup
    }

    /// `sup |a|·w(ξ)` over the grid and `|ξ| ≤ limit`.
    pub fn weighted_sup(&self, limit: i64, weight: impl Fn(i64) -> f64) -> f64 {
        let mut sup: f64 = 0.0;
        for xi in -limit..=limit {
            let w = weight(xi);
            for a in self.column(xi) {
                sup = sup.max(a.norm() * w);
            }
        }
        sup
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// Named symbols available from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// `c`.
    Constant { value: f64 },
    /// `scale·⟨ξ⟩^s`.
    BracketPower {
        s: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `λ_ξ`.
    LambdaMultiplier,
    /// `scale·(1 + amplitude·sin 2πx)·⟨ξ⟩^s`.
    ModulatedBracketPower {
        s: f64,
        #[serde(default = "half")]
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `e^{2πikx}·⟨ξ⟩^s`.
    ExpModulated {
        #[serde(default)]
        s: f64,
        #[serde(default = "default_frequency")]
        frequency: i64,
    },
    /// `δ_{ξ, xi}`.
    Indicator { xi: i64 },
}

fn default_frequency() -> i64 {
    1
}

impl SymbolSpec {
    pub fn build(&self, model: &ModelProblem) -> Symbol {
        self.build_with_margin(model, DEFAULT_MARGIN)
    }

    pub fn build_with_margin(&self, model: &ModelProblem, margin: usize) -> Symbol {
        let c = |re: f64| Complex64::new(re, 0.0);
        match *self {
            SymbolSpec::Constant { value } => {
                Symbol::from_fn(model, margin, |_| c(value)).with_order(0.0).with_label(format!("constant({value})"))
            }
            SymbolSpec::BracketPower { s, scale } => Symbol::from_fn(model, margin, |p| c(scale * p.bracket.powf(s)))
                .with_order(s)
                .with_label(format!("bracket_power(s={s},scale={scale})")),
            SymbolSpec::LambdaMultiplier => {
                Symbol::from_fn(model, margin, |p| p.lambda).with_order(model.order()).with_label("lambda_multiplier")
            }
            SymbolSpec::ModulatedBracketPower { s, amplitude, scale } => Symbol::from_fn(model, margin, |p| {
                c(scale * (1.0 + amplitude * (2.0 * PI * p.x).sin()) * p.bracket.powf(s))
            })
            .with_order(s)
            .with_label(format!("modulated_bracket_power(s={s},amplitude={amplitude},scale={scale})")),
            SymbolSpec::ExpModulated { s, frequency } => Symbol::from_fn(model, margin, |p| {
                let k = (frequency * p.grid_index as i64).rem_euclid(model.q() as i64);
                Complex64::cis(2.0 * PI * k as f64 / model.q() as f64) * p.bracket.powf(s)
            })
            .with_order(s)
            .with_label(format!("exp_modulated(s={s},k={frequency})")),
            SymbolSpec::Indicator { xi } => Symbol::from_fn(model, margin, |p| c(if p.xi == xi { 1.0 } else { 0.0 }))
                .with_order(0.0)
                .with_label(format!("indicator({xi})")),
        }
    }
}

/// The admissible function `q(x, y) = e^{2πik(y-x)} - 1`.
///
/// `k = 1` is the default family; its conjugate `k = -1` serves the adjoint
/// calculus. `k = 0` is the degenerate (non-admissible) function `q ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissibleFamily {
    pub frequency: i64,
}

impl Default for AdmissibleFamily {
    fn default() -> Self {
        Self { frequency: 1 }
    }
}

impl AdmissibleFamily {
    pub fn new(frequency: i64) -> Self {
        Self { frequency }
    }

    /// `q̃ = conj(q)`.
    pub fn conjugate(self) -> Self {
        Self { frequency: -self.frequency }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        Complex64::cis(2.0 * PI * (self.frequency as f64 * (y - x)).fract()) - 1.0
    }

    /// `∂^β_y q^α(x, y)` at `y = x`; independent of `x` for this family.
    pub fn power_derivative(&self, alpha: usize, beta: usize) -> Complex64 {
        // (e^{2πiks} - 1)^α = Σ_j C(α, j) (-1)^{α-j} e^{2πikjs}
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        for j in 0..=alpha {
            if j > 0 {
                binom *= (alpha - j + 1) as f64 / j as f64;
            }
            let sign = if (alpha - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            let rate = Complex64::new(0.0, 2.0 * PI * (self.frequency * j as i64) as f64);
            acc += rate.powu(beta as u32) * (sign * binom);
        }
        acc
    }

    /// Checks `q(x,x) = 0`, `∂_y q(x,y)|_{y=x} ≠ 0` and `q(x,0) = q(x,1)` on the grid.
    pub fn check(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            if self.eval(x, x).norm() > 1e-14 {
                return Err(Error::Admissibility(format!("q(x,x) != 0 at x={x}")));
            }
            if (self.eval(x, 0.0) - self.eval(x, 1.0)).norm() > 1e-12 {
                return Err(Error::Admissibility(format!("q(x,0) != q(x,1) at x={x}")));
            }
        }
        if self.power_derivative(1, 1).norm() == 0.0 {
            return Err(Error::Admissibility("∂_y q vanishes on the diagonal".into()));
        }
        Ok(())
    }
}

/// Lower-triangular system `∂^β = Σ_{α≤β} T[β,α] D^(α)` and its inverse.
#[derive(Debug, Clone)]
pub struct DTransform {
    pub max_order: usize,
    /// `T[β][α] = (1/α!) ∂^β_y q^α(x,y)|_{y=x}`.
    pub forward: Vec<Vec<Complex64>>,
    /// `D^(β) = Σ_{j≤β} inverse[β][j] ∂^j`.
    pub inverse: Vec<Vec<Complex64>>,
}

/// Builds the table expressing `D^(α)` through ordinary derivatives.
pub fn d_operator_transform(family: &AdmissibleFamily, max_order: usize) -> Result<DTransform> {
    let size = max_order + 1;
    let zero = Complex64::new(0.0, 0.0);
    let mut forward = vec![vec![zero; size]; size];
    let mut factorial = 1.0;
    for alpha in 0..size {
        if alpha > 0 {
            factorial *= alpha as f64;
        }
        for (beta, row) in forward.iter_mut().enumerate().skip(alpha) {
            row[alpha] = family.power_derivative(alpha, beta) / factorial;
        }
    }
    for (beta, row) in forward.iter().enumerate() {
        if row[beta].norm() < 1e-300 {
            return Err(Error::Admissibility(format!("T[{beta},{beta}] vanishes; ∂_y q(x,y)|_(y=x) = 0")));
        }
    }
    // forward substitution column by column: T · inverse^T = I on lower triangles
    let mut inverse = vec![vec![zero; size]; size];
    #[allow(clippy::needless_range_loop)]
    for beta in 0..size {
        for j in 0..=beta {
            let delta = if j == beta { Complex64::new(1.0, 0.0) } else { zero };
            let mut acc = delta;
            for alpha in j..beta {
                acc -= forward[beta][alpha] * inverse[alpha][j];
            }
            inverse[beta][j] = acc / forward[beta][beta];
        }
    }
    Ok(DTransform { max_order, forward, inverse })
}

/// Spectral derivatives `∂^j_x` of periodic grid samples for `j = 0..=max`.
pub fn spectral_derivatives(samples: &[Complex64], max: usize) -> Vec<Vec<Complex64>> {
    let q = samples.len();
    let mut out = vec![samples.to_vec()];
    if max == 0 {
        return out;
    }
    if samples.iter().all(|z| *z == samples[0]) {
        out.extend((0..max).map(|_| vec![Complex64::new(0.0, 0.0); q]));
        return out;
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(q);
    let backward = planner.plan_fft_inverse(q);
    let mut spectrum = samples.to_vec();
    forward.process(&mut spectrum);
    for order in 1..=max {
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let signed = if 2 * k < q { k as f64 } else { k as f64 - q as f64 };
                if q.is_multiple_of(2) && 2 * k == q {
                    if order % 2 == 1 {
                        return Complex64::new(0.0, 0.0);
                    }
                    return c
                        * (2.0 * PI * (q / 2) as f64).powi(order as i32)
                        * if order % 4 == 0 { 1.0 } else { -1.0 };
                }
                c * Complex64::new(0.0, 2.0 * PI * signed).powu(order as u32)
            })
            .collect();
        backward.process(&mut buf);
        out.push(buf.into_iter().map(|z| z / q as f64).collect());
    }
    out
}

/// Which biorthogonal pairing a difference operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `Δ`: `u_ξ^{-1} Σ_η u_η a(η) ∫ q^α v̄_η u_ξ`.
    Primal,
    /// `Δ̃`: `v_ξ^{-1} Σ_η v_η a(η) ∫ q̃^α ū_η v_ξ`.
    Adjoint,
}

/// `C[i][ξ][η] = ∫ q^α(x_i, y) conj(w_η(y)) z_ξ(y) dy` on an oversampled grid.
#[derive(Debug)]
struct CouplingTensor {
    out_reach: i64,
    in_reach: i64,
    values: Vec<Complex64>,
}

impl CouplingTensor {
    fn get(&self, i: usize, xi: i64, eta: i64) -> Complex64 {
        let rows = (2 * self.out_reach + 1) as usize;
        let cols = (2 * self.in_reach + 1) as usize;
        let r = (xi + self.out_reach) as usize;
        let c = (eta + self.in_reach) as usize;
        self.values[(i * rows + r) * cols + c]
    }
}

type Eigenfunction<'a> = Box<dyn Fn(i64, f64) -> Complex64 + 'a>;

/// Difference operators and `D^(β)` for one model and one admissible family.
///
/// Coupling tensors are cached per `(α, side, margin)`; the engine is `Sync`.
pub struct DifferenceCalculus<'m> {
    model: &'m ModelProblem,
    family: AdmissibleFamily,
    transform: DTransform,
    cache: Mutex<HashMap<(usize, Side, usize), Arc<CouplingTensor>>>,
}

impl<'m> DifferenceCalculus<'m> {
    pub fn new(model: &'m ModelProblem, family: AdmissibleFamily, max_order: usize) -> Result<Self> {
        family.check(model.grid())?;
        let transform = d_operator_transform(&family, max_order)?;
        Ok(Self { model, family, transform, cache: Mutex::new(HashMap::new()) })
    }

    /// Engine with the default family and derivative order up to 4.
    pub fn standard(model: &'m ModelProblem) -> Self {
        Self::new(model, AdmissibleFamily::default(), DEFAULT_MARGIN).expect("the default family is admissible")
    }

    pub fn model(&self) -> &'m ModelProblem {
        self.model
    }

    pub fn family(&self) -> AdmissibleFamily {
        self.family
    }

    pub fn transform(&self) -> &DTransform {
        &self.transform
    }

    /// `D^(β)_x a`.
    pub fn derivative(&self, sym: &Symbol, beta: usize) -> Result<Symbol> {
        if beta > self.transform.max_order {
            return Err(Error::Range { requested: beta, max: self.transform.max_order });
        }
        if beta == 0 {
            return Ok(sym.clone());
        }
        let coeffs = &self.transform.inverse[beta];
        let mut values = Vec::with_capacity(sym.values.len());
        for xi in sym.indices() {
            let derivs = spectral_derivatives(sym.column(xi), beta);
            for i in 0..sym.q {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, d) in derivs.iter().enumerate() {
                    acc += coeffs[j] * d[i];
                }
                values.push(acc);
            }
        }
        Ok(sym.with_values(sym.margin, values).with_order(sym.order + sym.delta * beta as f64))
    }

    /// `Δ^α a` through the coupling integrals.
    pub fn delta(&self, sym: &Symbol, alpha: usize) -> Result<Symbol> {
        self.delta_on(sym, alpha, Side::Primal, self.family)
    }

    /// `Δ̃^α a` with the conjugate family `q̃ = conj(q)`.
    pub fn delta_star(&self, sym: &Symbol, alpha: usize) -> Result<Symbol> {
        self.delta_on(sym, alpha, Side::Adjoint, self.family.conjugate())
    }

    fn delta_on(&self, sym: &Symbol, alpha: usize, side: Side, family: AdmissibleFamily) -> Result<Symbol> {
        if alpha == 0 {
            return Ok(sym.clone());
        }
        let needed = alpha * family.frequency.unsigned_abs() as usize;
        if needed > sym.margin {
            return Err(Error::Extension { needed, available: sym.margin });
        }
        let out_margin = sym.margin - needed;
        let tensor = self.coupling(alpha, side, family, sym.margin, out_margin);
        let model = self.model;
        let q = sym.q;
        let out_reach = (model.n() + out_margin) as i64;
        let in_reach = sym.reach();
        let basis = |xi: i64, i: usize| match side {
            Side::Primal => model.u_at(xi, i),
            Side::Adjoint => model.v_at(xi, i),
        };
        let mut values = Vec::with_capacity((2 * out_reach as usize + 1) * q);
        for xi in -out_reach..=out_reach {
            for i in 0..q {
                let mut acc = Complex64::new(0.0, 0.0);
                for eta in -in_reach..=in_reach {
                    let c = tensor.get(i, xi, eta);
                    if c == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    acc += basis(eta, i) * sym.get(eta, i) * c;
                }
                values.push(acc / basis(xi, i));
            }
        }
        Ok(sym.with_values(out_margin, values).with_order(sym.order - sym.rho * alpha as f64))
    }

    fn coupling(
        &self,
        alpha: usize,
        side: Side,
        family: AdmissibleFamily,
        in_margin: usize,
        out_margin: usize,
    ) -> Arc<CouplingTensor> {
        let key = (alpha, side, in_margin);
        if let Some(t) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Arc::clone(t);
        }
        let model = self.model;
        let n = model.n();
        let in_reach = (n + in_margin) as i64;
        let out_reach = (n + out_margin) as i64;
        // integrand frequencies stay below 2N + 2·in_margin + 1
        let p = model.q().max(4 * (n + in_margin) + 2);
        let ys: Vec<f64> = (0..p).map(|j| j as f64 / p as f64).collect();
        let (z, w): (Eigenfunction<'_>, Eigenfunction<'_>) = match side {
            Side::Primal => (Box::new(|k, y| model.u_eval(k, y)), Box::new(|k, y| model.v_eval(k, y))),
            Side::Adjoint => (Box::new(|k, y| model.v_eval(k, y)), Box::new(|k, y| model.u_eval(k, y))),
        };
        let zs: Vec<Vec<Complex64>> = (-out_reach..=out_reach).map(|k| ys.iter().map(|&y| z(k, y)).collect()).collect();
        let ws: Vec<Vec<Complex64>> =
            (-in_reach..=in_reach).map(|k| ys.iter().map(|&y| w(k, y).conj()).collect()).collect();
        let weight = 1.0 / p as f64;
        let rows = zs.len();
        let cols = ws.len();
        let mut values = vec![Complex64::new(0.0, 0.0); model.q() * rows * cols];
        for (i, &x) in model.grid().iter().enumerate() {
            let qa: Vec<Complex64> = ys.iter().map(|&y| family.eval(x, y).powu(alpha as u32) * weight).collect();
            for (r, zr) in zs.iter().enumerate() {
                let weighted: Vec<Complex64> = qa.iter().zip(zr).map(|(a, b)| a * b).collect();
                for (c, wc) in ws.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (a, b) in weighted.iter().zip(wc) {
                        acc += a * b;
                    }
                    // entries at roundoff level are dropped so that exact zeros stay exact
                    values[(i * rows + r) * cols + c] = if acc.norm() < 1e-14 { Complex64::new(0.0, 0.0) } else { acc };
                }
            }
        }
        let tensor = Arc::new(CouplingTensor { out_reach, in_reach, values });
        self.cache.lock().expect("cache poisoned").insert(key, Arc::clone(&tensor));
        tensor
    }

    /// `sup |Δ^α D^(β) a(x, ξ)|·⟨ξ⟩^{-l+ρα-δβ}` over the grid and the window.
    #[allow(clippy::too_many_arguments)]
    pub fn seminorm(&self, sym: &Symbol, l: f64, alpha: usize, beta: usize, rho: f64, delta: f64) -> Result<f64> {
        let table = self.delta(&self.derivative(sym, beta)?, alpha)?;
        let n = self.model.n() as i64;
        let exponent = -l + rho * alpha as f64 - delta * beta as f64;
        Ok(table.weighted_sup(n, |xi| self.model.bracket_of(xi).powf(exponent)))
    }

    /// Fits the order of `sym` from `sup_x |Δ^α D^(β) a|` over `α, β ≤ 2`.
    pub fn estimate_order(&self, sym: &Symbol, rho: f64, delta: f64) -> Result<SeminormReport> {
        let model = self.model;
        let n = model.n() as i64;
        let scale = sym.max_abs().max(f64::MIN_POSITIVE);
        let lo = (n / 2).max(1);
        let mut groups = Vec::new();
        for alpha in 0..=2usize {
            for beta in 0..=2usize {
                let table = self.delta(&self.derivative(sym, beta)?, alpha)?;
                let sups: Vec<(i64, f64)> =
                    (-n..=n).map(|xi| (xi, table.column(xi).iter().map(|z| z.norm()).fold(0.0, f64::max))).collect();
                let peak = sups.iter().map(|s| s.1).fold(0.0, f64::max);
                let points: Vec<(f64, f64)> = sups
                    .iter()
                    .filter(|(xi, s)| xi.abs() >= lo && *s > 1e-10 * scale)
                    .map(|&(xi, s)| (model.bracket_of(xi).ln(), s.ln()))
                    .collect();
                let vanishing = peak <= 1e-10 * scale || points.len() < 2;
                let exponent = if vanishing {
                    None
                } else {
                    Some(linear_fit(&points).0 + rho * alpha as f64 - delta * beta as f64)
                };
                groups.push(GroupFit { alpha, beta, exponent, sups: sups.into_iter().map(|s| s.1).collect() });
            }
        }
        let fitted_order = groups.iter().filter_map(|g| g.exponent).fold(f64::NEG_INFINITY, f64::max);
        let fitted_order = if fitted_order.is_finite() { fitted_order } else { 0.0 };
        let mut seminorms = Vec::new();
        for g in &groups {
            let exponent = -fitted_order + rho * g.alpha as f64 - delta * g.beta as f64;
            let value =
                (-n..=n).zip(&g.sups).map(|(xi, s)| s * model.bracket_of(xi).powf(exponent)).fold(0.0, f64::max);
            seminorms.push(SeminormEntry { alpha: g.alpha, beta: g.beta, exponent: g.exponent, value });
        }
        Ok(SeminormReport { fitted_order, seminorms })
    }
}

struct GroupFit {
    alpha: usize,
    beta: usize,
    exponent: Option<f64>,
    sups: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormEntry {
    pub alpha: usize,
    pub beta: usize,
    /// Fitted growth exponent `m` implied by this `(α, β)`; `None` when the
    /// combination vanishes identically.
    pub exponent: Option<f64>,
    /// `p_{αβ}` at `l = m̂`.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormReport {
    pub fitted_order: f64,
    pub seminorms: Vec<SeminormEntry>,
}

/// `D^(β) a` with a freshly built engine.
pub fn apply_d(model: &ModelProblem, sym: &Symbol, beta: usize, family: &AdmissibleFamily) -> Result<Symbol> {
    DifferenceCalculus::new(model, *family, beta.max(1))?.derivative(sym, beta)
}

/// `Δ^α a` with a freshly built engine.
pub fn apply_delta(model: &ModelProblem, sym: &Symbol, alpha: usize, family: &AdmissibleFamily) -> Result<Symbol> {
    DifferenceCalculus::new(model, *family, 1)?.delta(sym, alpha)
}

/// Whether a seminorm stays bounded along increasing truncations: the last
/// ratio of successive values must not exceed `1.25`.
pub fn seminorm_bounded(values: &[f64]) -> bool {
    values.windows(2).last().map(|w| w[1] <= 1.25 * w[0]).unwrap_or(true)
}
