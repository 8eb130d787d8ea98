//! Galerkin time stepping for `∂_t v = K(t) v + f`, `v(0) = u₀`, with energy,
//! uniqueness and residual diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{garding_c0, garding_estimate};
use crate::calculus::{condition_number, MAX_CONDITION};
use crate::error::{Error, Result};
use crate::model::{linear_fit, ModelProblem};
use crate::quantize::galerkin_matrix;
use crate::symbols::{Symbol, SymbolSpec};
use crate::transform::{fourier, gram_norm_sq, random_coefficients, CoeffTag, CoeffVector, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CrankNicolson,
    BackwardEuler,
    Picard,
}

pub type OperatorFactory = Arc<dyn Fn(&ModelProblem, f64) -> Symbol + Send + Sync>;
pub type ForcingFactory = Arc<dyn Fn(&ModelProblem, f64) -> GridFunction + Send + Sync>;

/// Picard stops once successive iterates differ by less than this.
pub const PICARD_TOLERANCE: f64 = 1e-10;
pub const PICARD_MAX_ITERATIONS: usize = 50;

#[derive(Clone)]
pub struct EvolutionProblem {
    pub label: String,
    pub operator: OperatorFactory,
    pub forcing: Option<ForcingFactory>,
    pub initial: CoeffVector,
    pub horizon: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Gate on `Re K` instead of `−Re K`.
    pub literal: bool,
}

impl std::fmt::Debug for EvolutionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvolutionProblem")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .field("scheme", &self.scheme)
            .field("literal", &self.literal)
            .finish_non_exhaustive()
    }
}

impl EvolutionProblem {
    pub fn new(
        label: impl Into<String>,
        operator: OperatorFactory,
        initial: CoeffVector,
        horizon: f64,
        steps: usize,
        scheme: Scheme,
    ) -> Self {
        Self { label: label.into(), operator, forcing: None, initial, horizon, steps, scheme, literal: false }
    }

    pub fn with_forcing(mut self, forcing: ForcingFactory) -> Self {
        self.forcing = Some(forcing);
        self
    }

    /// Initial data given on the grid.
    pub fn with_initial_function(mut self, model: &ModelProblem, u0: &GridFunction) -> Result<Self> {
        self.initial = fourier(model, u0)?;
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    fn forcing_at(&self, model: &ModelProblem, t: f64) -> Result<Option<DVector<Complex64>>> {
        match &self.forcing {
            None => Ok(None),
            Some(f) => Ok(Some(DVector::from_vec(fourier(model, &f(model, t))?.values))),
        }
    }

    fn matrix_at(&self, model: &ModelProblem, t: f64) -> DMatrix<Complex64> {
        galerkin_matrix(model, &(self.operator)(model, t)).matrix
    }

    /// True when `K(t)` vanishes at the sampled gate times.
    pub fn operator_vanishes(&self, model: &ModelProblem) -> bool {
        self.gate_times().iter().all(|&t| (self.operator)(model, t).max_abs() == 0.0)
    }

    fn gate_times(&self) -> [f64; 3] {
        [0.0, 0.5 * self.horizon, self.horizon]
    }
}

/// `−Re K(t)` (or `Re K` in literal mode) must be positive-elliptic at
/// `t ∈ {0, T/2, T}`; `K ≡ 0` is admitted.
pub fn dissipativity_gate(model: &ModelProblem, prob: &EvolutionProblem) -> Result<()> {
    if prob.operator_vanishes(model) {
        return Ok(());
    }
    let sign = if prob.literal { 1.0 } else { -1.0 };
    for t in prob.gate_times() {
        let k = (prob.operator)(model, t);
        let real = k.map(|v| Complex64::new(sign * v.re, 0.0));
        garding_c0(model, &real, k.order())
            .map_err(|e| Error::Ellipticity(format!("dissipativity gate failed at t={t}: {e}")))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub coefficients: Vec<CoeffVector>,
    /// `‖v(t_k)‖_{L²}`.
    pub norms: Vec<f64>,
    pub scheme: Scheme,
    /// Picard sweeps used; zero for the implicit schemes.
    pub iterations: usize,
}

impl Trajectory {
    pub fn last(&self) -> &CoeffVector {
        self.coefficients.last().expect("trajectories are never empty")
    }
}

fn solve(system: &DMatrix<Complex64>, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let condition = condition_number(system);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SolveFailure(format!("step matrix condition {condition:.3e}")));
    }
    system.clone().lu().solve(rhs).ok_or_else(|| Error::SolveFailure("singular step matrix".into()))
}

/// Integrates the problem on `steps` uniform steps.
pub fn solve_ivp(model: &ModelProblem, prob: &EvolutionProblem) -> Result<Trajectory> {
    if !(prob.horizon > 0.0) || prob.steps == 0 {
        return Err(Error::Usage(format!("need T > 0 and steps ≥ 1, got T={}, steps={}", prob.horizon, prob.steps)));
    }
    if prob.initial.values.len() != model.len() {
        return Err(Error::Shape { expected: model.len(), got: prob.initial.values.len() });
    }
    dissipativity_gate(model, prob)?;
    let dt = prob.dt();
    let times: Vec<f64> = (0..=prob.steps).map(|k| k as f64 * dt).collect();
    let len = model.len();
    let eye = DMatrix::<Complex64>::identity(len, len);
    let u0 = DVector::from_column_slice(&prob.initial.values);
    let half = Complex64::new(0.5 * dt, 0.0);
    let step = Complex64::new(dt, 0.0);
    let (states, iterations) = match prob.scheme {
        Scheme::CrankNicolson => {
            let mut states = vec![u0];
            let mut current = prob.matrix_at(model, 0.0);
            for k in 0..prob.steps {
                let next = prob.matrix_at(model, times[k + 1]);
                let mut rhs = (&eye + &current * half) * &states[k];
                if let Some(f) = prob.forcing_at(model, times[k] + 0.5 * dt)? {
                    rhs += f * step;
                }
                states.push(solve(&(&eye - &next * half), &rhs)?);
                current = next;
            }
            (states, 0)
        }
        Scheme::BackwardEuler => {
            let mut states = vec![u0];
            for k in 0..prob.steps {
                let next = prob.matrix_at(model, times[k + 1]);
                let mut rhs = states[k].clone();
                if let Some(f) = prob.forcing_at(model, times[k + 1])? {
                    rhs += f * step;
                }
                states.push(solve(&(&eye - &next * step), &rhs)?);
            }
            (states, 0)
        }
        Scheme::Picard => picard(model, prob, &times, u0)?,
    };
    let gram = model.gram();
    let norms = states.iter().map(|v| gram_norm_sq(&gram, v.as_slice()).max(0.0).sqrt()).collect();
    let coefficients =
        states.into_iter().map(|v| CoeffVector { tag: CoeffTag::L, values: v.as_slice().to_vec() }).collect();
    Ok(Trajectory { times, coefficients, norms, scheme: prob.scheme, iterations })
}

fn picard(
    model: &ModelProblem,
    prob: &EvolutionProblem,
    times: &[f64],
    u0: DVector<Complex64>,
) -> Result<(Vec<DVector<Complex64>>, usize)> {
    let dt = prob.dt();
    let matrices: Vec<DMatrix<Complex64>> = times.iter().map(|&t| prob.matrix_at(model, t)).collect();
    let forcing: Vec<Option<DVector<Complex64>>> =
        times.iter().map(|&t| prob.forcing_at(model, t)).collect::<Result<_>>()?;
    let mut states = vec![u0.clone(); times.len()];
    let mut last_change = f64::INFINITY;
    let mut growth = 0;
    let half = Complex64::new(0.5 * dt, 0.0);
    for iteration in 1..=PICARD_MAX_ITERATIONS {
        let rates: Vec<DVector<Complex64>> = states
            .iter()
            .zip(&matrices)
            .zip(&forcing)
            .map(|((v, m), f)| match f {
                Some(f) => m * v + f,
                None => m * v,
            })
            .collect();
        let mut next = Vec::with_capacity(states.len());
        next.push(u0.clone());
        for k in 1..states.len() {
            let increment = (&rates[k - 1] + &rates[k]) * half;
            let value = &next[k - 1] + increment;
            next.push(value);
        }
        let change = next.iter().zip(&states).map(|(a, b)| (a - b).camax()).fold(0.0, f64::max);
        let scale = next.iter().map(|v| v.camax()).fold(1.0, f64::max);
        states = next;
        if !change.is_finite() {
            return Err(Error::NonContraction(format!("iterate diverged at sweep {iteration}")));
        }
        if change <= PICARD_TOLERANCE * scale {
            return Ok((states, iteration));
        }
        growth = if change > last_change { growth + 1 } else { 0 };
        if growth >= 5 {
            return Err(Error::NonContraction(format!(
                "update grew for 5 consecutive sweeps (last {change:.3e} at sweep {iteration})"
            )));
        }
        last_change = change;
    }
    Ok((states, PICARD_MAX_ITERATIONS))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// Gårding `C₂` of `−K`, maximized over the gate times.
    pub c2: f64,
    /// `C(T)` multiplying `‖u₀‖²`.
    pub c_initial: f64,
    /// `C′(T)` multiplying `∫‖f‖²`.
    pub c_forcing: f64,
    /// Smallest `C′` the trajectory needs, when there is forcing.
    pub tightest_c_forcing: Option<f64>,
    /// `bound(t_k) − ‖v(t_k)‖²`.
    pub margins: Vec<f64>,
    pub bounds: Vec<f64>,
    pub violations: usize,
    pub nonincreasing: bool,
}

/// `C₂` of the Gårding inequality for `−K(t)`, maximized over the gate times.
pub fn dissipation_constant(model: &ModelProblem, prob: &EvolutionProblem, trials: usize, seed: u64) -> Result<f64> {
    if prob.operator_vanishes(model) {
        return Ok(0.0);
    }
    let mut c2: f64 = 0.0;
    for t in prob.gate_times() {
        let k = (prob.operator)(model, t);
        let report = garding_estimate(model, &k.scale(Complex64::new(-1.0, 0.0)), k.order(), trials, seed)?;
        c2 = c2.max(report.c2);
    }
    Ok(c2)
}

/// Checks `‖v(t)‖² ≤ C(t)‖u₀‖² + C′(t)∫₀ᵗ‖f‖²` with the Gronwall constants
/// `C = e^{2C₂t}` (no forcing) or `C = C′ = e^{(2C₂+1)t}`.
pub fn energy_check(
    model: &ModelProblem,
    prob: &EvolutionProblem,
    traj: &Trajectory,
    trials: usize,
    seed: u64,
) -> Result<EnergyReport> {
    let c2 = dissipation_constant(model, prob, trials, seed)?;
    let gram = model.gram();
    let initial = traj.norms[0].powi(2);
    let forcing_sq: Vec<f64> = match &prob.forcing {
        None => vec![0.0; traj.times.len()],
        Some(_) => traj
            .times
            .iter()
            .map(|&t| Ok(gram_norm_sq(&gram, prob.forcing_at(model, t)?.expect("forcing present").as_slice())))
            .collect::<Result<_>>()?,
    };
    let mut integral = vec![0.0; traj.times.len()];
    for k in 1..traj.times.len() {
        integral[k] = integral[k - 1] + 0.5 * (traj.times[k] - traj.times[k - 1]) * (forcing_sq[k - 1] + forcing_sq[k]);
    }
    let forced = prob.forcing.is_some();
    let rate = if forced { 2.0 * c2 + 1.0 } else { 2.0 * c2 };
    let mut bounds = Vec::with_capacity(traj.times.len());
    let mut margins = Vec::with_capacity(traj.times.len());
    let mut violations = 0;
    let mut tightest: Option<f64> = None;
    for (k, &t) in traj.times.iter().enumerate() {
        let c = (rate * t).exp();
        let c_prime = ((2.0 * c2 + 1.0) * t).exp();
        let bound = c * initial + c_prime * integral[k];
        let value = traj.norms[k].powi(2);
        if value > bound * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
        if forced && integral[k] > 0.0 {
            let needed = ((value - c * initial) / integral[k]).max(0.0);
            tightest = Some(tightest.map_or(needed, |v: f64| v.max(needed)));
        }
        bounds.push(bound);
        margins.push(bound - value);
    }
    let nonincreasing = traj.norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14));
    let horizon = *traj.times.last().expect("non-empty");
    Ok(EnergyReport {
        c2,
        c_initial: (rate * horizon).exp(),
        c_forcing: ((2.0 * c2 + 1.0) * horizon).exp(),
        tightest_c_forcing: tightest,
        margins,
        bounds,
        violations,
        nonincreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub bitwise_identical: bool,
    /// `max_t ‖ω(t)‖` for `ω(0) = 0`, `f = 0`.
    pub homogeneous_max: f64,
    pub scale: f64,
    /// `‖v_δ(t) − v(t)‖ / scale`.
    pub ratios: Vec<f64>,
    /// `e^{C₂ t}`.
    pub envelope: Vec<f64>,
    pub within_envelope: bool,
}

/// Re-solves with identical data, with zero data, and with `u₀` perturbed by
/// `scale` (in `L²`) along a seeded random direction.
pub fn uniqueness_probe(
    model: &ModelProblem,
    prob: &EvolutionProblem,
    scale: f64,
    c2: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    let first = solve_ivp(model, prob)?;
    let second = solve_ivp(model, prob)?;
    let bitwise_identical = first.coefficients.iter().zip(&second.coefficients).all(|(a, b)| {
        a.values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
    });

    let mut homogeneous = prob.clone();
    homogeneous.forcing = None;
    homogeneous.initial = CoeffVector::zeros(model, CoeffTag::L);
    let omega = solve_ivp(model, &homogeneous)?;
    let homogeneous_max = omega.norms.iter().cloned().fold(0.0, f64::max);

    let gram = model.gram();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = random_coefficients(model, CoeffTag::L, &mut rng);
    let norm = gram_norm_sq(&gram, &direction.values).sqrt();
    let mut perturbed = prob.clone();
    perturbed.initial.values =
        prob.initial.values.iter().zip(&direction.values).map(|(u, d)| u + d * (scale / norm)).collect();
    let other = solve_ivp(model, &perturbed)?;
    let ratios: Vec<f64> = first
        .coefficients
        .iter()
        .zip(&other.coefficients)
        .map(|(a, b)| {
            let diff: Vec<Complex64> = a.values.iter().zip(&b.values).map(|(x, y)| y - x).collect();
            gram_norm_sq(&gram, &diff).max(0.0).sqrt() / scale
        })
        .collect();
    let envelope: Vec<f64> = first.times.iter().map(|&t| (c2 * t).exp()).collect();
    let within_envelope = ratios.iter().zip(&envelope).all(|(r, e)| *r <= e * (1.0 + 1e-6));
    Ok(UniquenessReport { bitwise_identical, homogeneous_max, scale, ratios, envelope, within_envelope })
}

/// `‖(v_{k+1} − v_{k−1})/(2Δt) − (K(t_k)v_k + f(t_k))‖_{L²}` at interior steps.
pub fn residual(model: &ModelProblem, prob: &EvolutionProblem, traj: &Trajectory) -> Result<Vec<f64>> {
    let gram = model.gram();
    let dt = prob.dt();
    (1..traj.times.len() - 1)
        .map(|k| {
            let prev = DVector::from_column_slice(&traj.coefficients[k - 1].values);
            let here = DVector::from_column_slice(&traj.coefficients[k].values);
            let next = DVector::from_column_slice(&traj.coefficients[k + 1].values);
            let mut defect =
                (next - prev) / Complex64::new(2.0 * dt, 0.0) - prob.matrix_at(model, traj.times[k]) * here;
            if let Some(f) = prob.forcing_at(model, traj.times[k])? {
                defect -= f;
            }
            Ok(gram_norm_sq(&gram, defect.as_slice()).max(0.0).sqrt())
        })
        .collect()
}

/// Registered test problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSpec {
    /// `K = −Op(⟨ξ⟩²)`, `f = 0`, `u₀ = u_1`.
    Decay,
    /// `K = 0`, `f = 0`, `u₀ = u_1`.
    Zero,
    /// `K = 0`, `f = u_1`, `u₀ = 0`.
    ForcedIntegration,
    /// `K(t) = −(1 + 0.3 cos 2πt) Op(⟨ξ⟩²) + 0.1 Op(e^{2πix})`, `f = u_2`, `u₀ = u_1`.
    TimeDependent,
}

impl ProblemSpec {
    pub const ALL: [ProblemSpec; 4] =
        [ProblemSpec::Decay, ProblemSpec::Zero, ProblemSpec::ForcedIntegration, ProblemSpec::TimeDependent];

    pub fn name(self) -> &'static str {
        match self {
            ProblemSpec::Decay => "decay",
            ProblemSpec::Zero => "zero",
            ProblemSpec::ForcedIntegration => "forced_integration",
            ProblemSpec::TimeDependent => "time_dependent",
        }
    }

    /// Needs modes `±1` (and `2` with forcing) inside the window.
    pub fn build(self, model: &ModelProblem, horizon: f64, steps: usize, scheme: Scheme) -> Result<EvolutionProblem> {
        let needed = if self == ProblemSpec::TimeDependent { 2 } else { 1 };
        if model.n() < needed {
            return Err(Error::Config(format!("problem {} needs N ≥ {needed}", self.name())));
        }
        let u1 = CoeffVector::indicator(model, CoeffTag::L, 1);
        let zero_op: OperatorFactory = Arc::new(|m: &ModelProblem, _| {
            SymbolSpec::Constant { value: 0.0 }.build_with_margin(m, 0).with_label("zero")
        });
        let prob = match self {
            ProblemSpec::Decay => {
                let op: OperatorFactory = Arc::new(|m: &ModelProblem, _| {
                    SymbolSpec::BracketPower { s: 2.0, scale: -1.0 }.build_with_margin(m, 0)
                });
                EvolutionProblem::new(self.name(), op, u1, horizon, steps, scheme)
            }
            ProblemSpec::Zero => EvolutionProblem::new(self.name(), zero_op, u1, horizon, steps, scheme),
            ProblemSpec::ForcedIntegration => EvolutionProblem::new(
                self.name(),
                zero_op,
                CoeffVector::zeros(model, CoeffTag::L),
                horizon,
                steps,
                scheme,
            )
            .with_forcing(Arc::new(|m: &ModelProblem, _| GridFunction::mode(m, 1))),
            ProblemSpec::TimeDependent => {
                let op: OperatorFactory = Arc::new(|m: &ModelProblem, t| {
                    let damping = 1.0 + 0.3 * (2.0 * PI * t).cos();
                    SymbolSpec::BracketPower { s: 2.0, scale: -damping }
                        .build_with_margin(m, 0)
                        .add(
                            &SymbolSpec::ExpModulated { s: 0.0, frequency: 1 }
                                .build_with_margin(m, 0)
                                .scale(Complex64::new(0.1, 0.0)),
                        )
                        .with_label("time_dependent")
                });
                EvolutionProblem::new(self.name(), op, u1, horizon, steps, scheme)
                    .with_forcing(Arc::new(|m: &ModelProblem, _| GridFunction::mode(m, 2)))
            }
        };
        Ok(prob)
    }
}

/// `‖v_T − e^{−⟨1⟩²T} u_1‖_{L²}` for the decay problem.
pub fn decay_error(model: &ModelProblem, scheme: Scheme, horizon: f64, steps: usize) -> Result<f64> {
    let prob = ProblemSpec::Decay.build(model, horizon, steps, scheme)?;
    let traj = solve_ivp(model, &prob)?;
    let mut exact = CoeffVector::zeros(model, CoeffTag::L);
    exact.values[model.position(1).expect("N ≥ 1")] =
        Complex64::new((-model.bracket_of(1).powi(2) * horizon).exp(), 0.0);
    let diff: Vec<Complex64> = traj.last().values.iter().zip(&exact.values).map(|(a, b)| a - b).collect();
    Ok(gram_norm_sq(&model.gram(), &diff).max(0.0).sqrt())
}

/// Slope of `log₂(error)` against `log₂(steps)`, negated.
pub fn convergence_order(
    model: &ModelProblem,
    scheme: Scheme,
    horizon: f64,
    steps: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let errors: Vec<f64> = steps.iter().map(|&s| decay_error(model, scheme, horizon, s)).collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = steps.iter().zip(&errors).map(|(&s, &e)| ((s as f64).log2(), e.log2())).collect();
    Ok((-linear_fit(&points).0, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    fn torus(n: usize) -> ModelProblem {
        build_model(ModelSpec::torus_derivative(n, 8 * n)).unwrap()
    }

    #[test]
    fn decay_orders() {
        let model = torus(8);
        let steps = [50, 100, 200, 400];
        let (cn, errors) = convergence_order(&model, Scheme::CrankNicolson, 0.1, &steps).unwrap();
        assert!((cn - 2.0).abs() <= 0.2, "{cn} {errors:?}");
        let (be, _) = convergence_order(&model, Scheme::BackwardEuler, 0.1, &steps).unwrap();
        assert!((be - 1.0).abs() <= 0.2, "{be}");
    }

    #[test]
    fn picard_matches_crank_nicolson() {
        let model = torus(8);
        let cn =
            solve_ivp(&model, &ProblemSpec::Decay.build(&model, 0.1, 400, Scheme::CrankNicolson).unwrap()).unwrap();
        let pi = solve_ivp(&model, &ProblemSpec::Decay.build(&model, 0.1, 400, Scheme::Picard).unwrap()).unwrap();
        let gap = cn.last().values.iter().zip(&pi.last().values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-6, "{gap}");
        assert!(pi.iterations > 1 && pi.iterations < PICARD_MAX_ITERATIONS);
    }

    #[test]
    fn picard_detects_stiffness() {
        let model = torus(8);
        let mut prob = ProblemSpec::Decay.build(&model, 0.1, 100, Scheme::Picard).unwrap();
        prob.initial = CoeffVector::indicator(&model, CoeffTag::L, 8);
        assert!(matches!(solve_ivp(&model, &prob), Err(Error::NonContraction(_))));
    }

    #[test]
    fn trivial_problems() {
        let model = torus(8);
        let zero = ProblemSpec::Zero.build(&model, 1.0, 50, Scheme::CrankNicolson).unwrap();
        let traj = solve_ivp(&model, &zero).unwrap();
        assert!(traj.coefficients.iter().all(|c| c == &zero.initial));
        let energy = energy_check(&model, &zero, &traj, 20, 0).unwrap();
        assert_eq!(energy.c_initial, 1.0);
        assert!(energy.violations == 0 && traj.norms.iter().all(|n| (n - 1.0).abs() < 1e-15));
        assert!(residual(&model, &zero, &traj).unwrap().iter().all(|r| *r <= 1e-13));

        let forced = ProblemSpec::ForcedIntegration.build(&model, 0.5, 40, Scheme::CrankNicolson).unwrap();
        let traj = solve_ivp(&model, &forced).unwrap();
        let end = traj.last().get(&model, 1);
        assert!((end - 0.5).norm() < 1e-12, "{end}");
        let energy = energy_check(&model, &forced, &traj, 20, 0).unwrap();
        assert_eq!(energy.violations, 0);
        assert!(energy.tightest_c_forcing.unwrap() <= energy.c_forcing);
    }

    #[test]
    fn decay_energy_and_residuals() {
        let model = torus(8);
        let prob = ProblemSpec::Decay.build(&model, 0.1, 100, Scheme::CrankNicolson).unwrap();
        let traj = solve_ivp(&model, &prob).unwrap();
        let energy = energy_check(&model, &prob, &traj, 50, 3).unwrap();
        assert!(energy.nonincreasing && energy.violations == 0);
        assert!(energy.c2.abs() < 1e-10);

        let max_residual = |scheme, steps| {
            let p = ProblemSpec::Decay.build(&model, 0.1, steps, scheme).unwrap();
            residual(&model, &p, &solve_ivp(&model, &p).unwrap()).unwrap().into_iter().fold(0.0, f64::max)
        };
        let cn = max_residual(Scheme::CrankNicolson, 100) / max_residual(Scheme::CrankNicolson, 200);
        let be = max_residual(Scheme::BackwardEuler, 100) / max_residual(Scheme::BackwardEuler, 200);
        assert!((cn - 4.0).abs() < 0.5, "{cn}");
        assert!((be - 2.0).abs() < 0.3, "{be}");
    }

    #[test]
    fn time_dependent_problem() {
        let model = torus(16);
        let prob = ProblemSpec::TimeDependent.build(&model, 0.5, 200, Scheme::CrankNicolson).unwrap();
        let traj = solve_ivp(&model, &prob).unwrap();
        let energy = energy_check(&model, &prob, &traj, 100, 5).unwrap();
        assert_eq!(energy.violations, 0);
        let probe = uniqueness_probe(&model, &prob, 1e-6, energy.c2, 5).unwrap();
        assert!(probe.bitwise_identical);
        assert!(probe.homogeneous_max <= 1e-12);
        assert!(probe.within_envelope);
    }

    #[test]
    fn gate_rejects_growth() {
        let model = torus(4);
        let mut prob = ProblemSpec::Decay.build(&model, 0.1, 10, Scheme::CrankNicolson).unwrap();
        prob.literal = true;
        assert!(matches!(solve_ivp(&model, &prob), Err(Error::Ellipticity(_))));
        let grow: OperatorFactory =
            Arc::new(|m: &ModelProblem, _| SymbolSpec::BracketPower { s: 2.0, scale: 1.0 }.build_with_margin(m, 0));
        let mut prob = ProblemSpec::Decay.build(&model, 0.1, 10, Scheme::CrankNicolson).unwrap();
        prob.operator = grow;
        assert!(matches!(solve_ivp(&model, &prob), Err(Error::Ellipticity(_))));
    }
}
