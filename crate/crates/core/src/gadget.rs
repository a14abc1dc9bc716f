//! The damped-ancilla dissipation gadget.
//!
//! A system coupled by `ω(L⊗σ⁺ + L†⊗σ⁻)` to an ancilla decaying at rate `γ`
//! is integrated in the ancilla basis blocks `ρ00`, `ρ01`, `ρ11` (time in
//! units of `1/γ`, `ε = ω/γ`) and compared against the effective Lindblad
//! evolution `2ε²(LρL† − ½{L†L, ρ})`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

const I_UNIT: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum GadgetError {
    #[error("invalid gadget configuration: {0}")]
    Param(String),
    #[error(
        "integrator not converged: halving dt moved samples by {diff:.3e} (tolerance {tol:.1e})"
    )]
    NotConverged { diff: f64, tol: f64 },
    #[error("trajectories are not on a common sample grid")]
    GridMismatch,
}

/// `|0⟩⟨1|` on a qubit.
pub fn lowering_operator() -> CMatrix {
    ladder_lowering(2)
}

pub fn pure_state(amplitudes: &[Complex64]) -> CMatrix {
    let v = nalgebra::DVector::from_column_slice(amplitudes);
    let v = &v / Complex64::new(v.norm(), 0.0);
    &v * v.adjoint()
}

/// `Σ_i |i⟩⟨i+1|`, the single-step lowering operator of a `d`-level system.
pub fn ladder_lowering(d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        m[(i, i + 1)] = Complex64::new(1.0, 0.0);
    }
    m
}

fn gaussian_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    })
}

/// Complex Gaussian matrix rescaled to unit operator norm.
pub fn random_contraction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(d, rng);
    let s = operator_norm(&g);
    g / Complex64::new(s, 0.0)
}

pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let amps: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    pure_state(&amps)
}

pub fn basis_state(d: usize, i: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, i)] = Complex64::new(1.0, 0.0);
    m
}

pub fn trace_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

pub fn operator_norm(m: &CMatrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Trace,
    Operator,
}

impl Norm {
    pub fn of(self, m: &CMatrix) -> f64 {
        match self {
            Norm::Trace => trace_norm(m),
            Norm::Operator => operator_norm(m),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::Trace => "trace",
            Norm::Operator => "operator",
        }
    }
}

fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// `LρL† − ½{L†L, ρ}`, also applied to off-diagonal blocks.
pub fn dissipator(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    let ldl = &ld * l;
    l * rho * &ld - anticommutator(&ldl, rho) * Complex64::new(0.5, 0.0)
}

/// Additional system dynamics, identical on every ancilla block.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemLiouvillian {
    Zero,
    Lindblad {
        hamiltonian: CMatrix,
        jumps: Vec<CMatrix>,
    },
}

impl SystemLiouvillian {
    /// `κ(DρD − ρ)` with `D = diag(1, −1, 1, −1, …)` and `κ = norm/2`, whose
    /// induced trace norm is exactly `norm`.
    pub fn dephasing(d: usize, norm: f64) -> Self {
        let mut j = CMatrix::zeros(d, d);
        for i in 0..d {
            j[(i, i)] = Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
        }
        let kappa = norm / 2.0;
        Self::Lindblad {
            hamiltonian: CMatrix::zeros(d, d),
            jumps: vec![j * Complex64::new(kappa.sqrt(), 0.0)],
        }
    }

    /// A random Hamiltonian plus two random jumps, rescaled so that the
    /// estimated induced norm equals `norm`.
    pub fn random<R: Rng + ?Sized>(d: usize, norm: f64, rng: &mut R) -> Self {
        let h = gaussian_matrix(d, rng);
        let hamiltonian = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let jumps = vec![gaussian_matrix(d, rng), gaussian_matrix(d, rng)];
        let raw = Self::Lindblad { hamiltonian, jumps };
        let scale = norm / raw.induced_norm_estimate(d);
        raw.scaled(scale)
    }

    /// Multiplies the generator by `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Self::Zero => Self::Zero,
            Self::Lindblad { hamiltonian, jumps } => Self::Lindblad {
                hamiltonian: hamiltonian * Complex64::new(s, 0.0),
                jumps: jumps
                    .iter()
                    .map(|j| j * Complex64::new(s.sqrt(), 0.0))
                    .collect(),
            },
        }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        match self {
            Self::Zero => CMatrix::zeros(rho.nrows(), rho.ncols()),
            Self::Lindblad { hamiltonian, jumps } => {
                let mut out = (hamiltonian * rho - rho * hamiltonian) * (-I_UNIT);
                for j in jumps {
                    out += dissipator(j, rho);
                }
                out
            }
        }
    }

    /// Largest `‖L_sys(X)‖₁/‖X‖₁` over the Hermitian basis `|i⟩⟨i|`,
    /// `(|i⟩⟨j| + |j⟩⟨i|)` and `i(|i⟩⟨j| − |j⟩⟨i|)`.
    pub fn induced_norm_estimate(&self, d: usize) -> f64 {
        let mut best: f64 = 0.0;
        let one = Complex64::new(1.0, 0.0);
        for i in 0..d {
            for j in i..d {
                let mut cands = Vec::new();
                if i == j {
                    cands.push(basis_state(d, i));
                } else {
                    let mut a = CMatrix::zeros(d, d);
                    a[(i, j)] = one;
                    a[(j, i)] = one;
                    cands.push(a);
                    let mut b = CMatrix::zeros(d, d);
                    b[(i, j)] = I_UNIT;
                    b[(j, i)] = -I_UNIT;
                    cands.push(b);
                }
                for x in cands {
                    best = best.max(trace_norm(&self.apply(&x)) / trace_norm(&x));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GadgetConfig {
    pub l: CMatrix,
    pub epsilon: f64,
    /// System Liouvillian strength: `‖L_sys‖ ≤ E ε²`.
    pub e_strength: f64,
    pub l_sys: SystemLiouvillian,
    pub tau_max: f64,
    pub dt: f64,
    /// Integration steps between stored samples.
    pub sample_every: usize,
    /// Largest sample change allowed when halving `dt`.
    pub convergence_tol: f64,
}

impl GadgetConfig {
    /// Qubit with `L = |0⟩⟨1|`, dephasing of norm `E ε²`, `τ ∈ [0, 50]`.
    pub fn qubit(epsilon: f64, e_strength: f64) -> Self {
        let l_sys = if e_strength == 0.0 {
            SystemLiouvillian::Zero
        } else {
            SystemLiouvillian::dephasing(2, e_strength * epsilon * epsilon)
        };
        Self {
            l: lowering_operator(),
            epsilon,
            e_strength,
            l_sys,
            tau_max: 50.0,
            dt: 1e-3,
            sample_every: 10,
            convergence_tol: 1e-9,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `ε̃ = ε/(1 − Eε²)`.
    pub fn eps_tilde(&self) -> f64 {
        self.epsilon / (1.0 - self.e_strength * self.epsilon * self.epsilon)
    }

    pub fn validate(&self) -> Result<(), GadgetError> {
        let bad = |m: String| Err(GadgetError::Param(m));
        if !self.l.is_square() || self.l.nrows() == 0 {
            return bad("L must be a non-empty square matrix".into());
        }
        if operator_norm(&self.l) > 1.0 + 1e-12 {
            return bad("L must be a contraction".into());
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1), got {}", self.epsilon));
        }
        if !(self.e_strength >= 0.0) || self.e_strength * self.epsilon * self.epsilon >= 1.0 {
            return bad("E ε² must lie in [0, 1)".into());
        }
        if !(self.dt > 0.0) || !(self.tau_max >= 0.0) || self.sample_every == 0 {
            return bad("need dt > 0, tau_max ≥ 0 and sample_every ≥ 1".into());
        }
        Ok(())
    }
}

/// The three ancilla blocks; `ρ10 = ρ01†` is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub rho00: CMatrix,
    pub rho01: CMatrix,
    pub rho11: CMatrix,
}

impl Blocks {
    pub fn ground(rho00: CMatrix) -> Self {
        let d = rho00.nrows();
        Self {
            rho00,
            rho01: CMatrix::zeros(d, d),
            rho11: CMatrix::zeros(d, d),
        }
    }

    pub fn trace(&self) -> f64 {
        (self.rho00.trace() + self.rho11.trace()).re
    }

    fn axpy(&self, a: f64, other: &Blocks) -> Blocks {
        let a = Complex64::new(a, 0.0);
        Blocks {
            rho00: &self.rho00 + &other.rho00 * a,
            rho01: &self.rho01 + &other.rho01 * a,
            rho11: &self.rho11 + &other.rho11 * a,
        }
    }

    fn symmetrize(&mut self) {
        let half = Complex64::new(0.5, 0.0);
        self.rho00 = (&self.rho00 + self.rho00.adjoint()) * half;
        self.rho11 = (&self.rho11 + self.rho11.adjoint()) * half;
    }

    fn max_diff(&self, other: &Blocks) -> f64 {
        trace_norm(&(&self.rho00 - &other.rho00))
            .max(trace_norm(&(&self.rho01 - &other.rho01)))
            .max(trace_norm(&(&self.rho11 - &other.rho11)))
    }
}

/// Right-hand side of the coupled block equations.
pub fn full_rhs(cfg: &GadgetConfig, b: &Blocks) -> Blocks {
    let e = Complex64::new(cfg.epsilon, 0.0) * I_UNIT;
    let l = &cfg.l;
    let ld = l.adjoint();
    let rho10 = b.rho01.adjoint();
    let two = Complex64::new(2.0, 0.0);
    Blocks {
        rho00: &b.rho11 * two - &ld * &rho10 * e + &b.rho01 * l * e + cfg.l_sys.apply(&b.rho00),
        rho01: -&b.rho01 + &b.rho00 * &ld * e - &ld * &b.rho11 * e + cfg.l_sys.apply(&b.rho01),
        rho11: -&b.rho11 * two - l * &b.rho01 * e + &rho10 * &ld * e + cfg.l_sys.apply(&b.rho11),
    }
}

/// `2ε²(LρL† − ½{L†L, ρ}) + L_sys(ρ)`.
pub fn target_rhs(cfg: &GadgetConfig, rho: &CMatrix) -> CMatrix {
    dissipator(&cfg.l, rho) * Complex64::new(2.0 * cfg.epsilon * cfg.epsilon, 0.0)
        + cfg.l_sys.apply(rho)
}

fn rk4<S, F: Fn(&S) -> S>(y: &S, dt: f64, f: F, axpy: impl Fn(&S, f64, &S) -> S) -> S {
    let k1 = f(y);
    let k2 = f(&axpy(y, dt / 2.0, &k1));
    let k3 = f(&axpy(y, dt / 2.0, &k2));
    let k4 = f(&axpy(y, dt, &k3));
    let y = axpy(y, dt / 6.0, &k1);
    let y = axpy(&y, dt / 3.0, &k2);
    let y = axpy(&y, dt / 3.0, &k3);
    axpy(&y, dt / 6.0, &k4)
}

#[derive(Debug, Clone)]
pub struct FullTrajectory {
    pub taus: Vec<f64>,
    pub samples: Vec<Blocks>,
    /// Largest `|tr ρ00 + tr ρ11 − 1|` over the samples.
    pub max_trace_drift: f64,
    /// Largest sample change when the run is repeated at `dt/2`.
    pub convergence: f64,
}

#[derive(Debug, Clone)]
pub struct TargetTrajectory {
    pub taus: Vec<f64>,
    pub samples: Vec<CMatrix>,
    pub convergence: f64,
}

fn step_count(cfg: &GadgetConfig, dt: f64) -> usize {
    (cfg.tau_max / dt).round() as usize
}

fn integrate_full(cfg: &GadgetConfig, rho00: &CMatrix, refine: usize) -> (Vec<f64>, Vec<Blocks>) {
    let dt = cfg.dt / refine as f64;
    let every = cfg.sample_every * refine;
    let steps = step_count(cfg, dt);
    let mut y = Blocks::ground(rho00.clone());
    let mut taus = vec![0.0];
    let mut samples = vec![y.clone()];
    for s in 1..=steps {
        y = rk4(&y, dt, |b| full_rhs(cfg, b), |a, h, b| a.axpy(h, b));
        y.symmetrize();
        if s % every == 0 {
            taus.push(s as f64 * dt);
            samples.push(y.clone());
        }
    }
    (taus, samples)
}

fn integrate_target(cfg: &GadgetConfig, rho: &CMatrix, refine: usize) -> (Vec<f64>, Vec<CMatrix>) {
    let dt = cfg.dt / refine as f64;
    let every = cfg.sample_every * refine;
    let steps = step_count(cfg, dt);
    let half = Complex64::new(0.5, 0.0);
    let mut y = rho.clone();
    let mut taus = vec![0.0];
    let mut samples = vec![y.clone()];
    for s in 1..=steps {
        y = rk4(
            &y,
            dt,
            |r| target_rhs(cfg, r),
            |a, h, b| a + b * Complex64::new(h, 0.0),
        );
        y = (&y + y.adjoint()) * half;
        if s % every == 0 {
            taus.push(s as f64 * dt);
            samples.push(y.clone());
        }
    }
    (taus, samples)
}

fn check_initial(cfg: &GadgetConfig, rho00: &CMatrix) -> Result<(), GadgetError> {
    cfg.validate()?;
    if rho00.shape() != cfg.l.shape() {
        return Err(GadgetError::Param(
            "initial state has the wrong dimension".into(),
        ));
    }
    Ok(())
}

/// Integrates the blocks from `ρ00(0)` with the ancilla in its ground state,
/// repeating at `dt/2` to confirm convergence.
pub fn evolve_full(cfg: &GadgetConfig, rho00: &CMatrix) -> Result<FullTrajectory, GadgetError> {
    check_initial(cfg, rho00)?;
    let (taus, samples) = integrate_full(cfg, rho00, 1);
    let (_, fine) = integrate_full(cfg, rho00, 2);
    let convergence = samples
        .iter()
        .zip(&fine)
        .map(|(a, b)| a.max_diff(b))
        .fold(0.0, f64::max);
    if convergence > cfg.convergence_tol {
        return Err(GadgetError::NotConverged {
            diff: convergence,
            tol: cfg.convergence_tol,
        });
    }
    let t0 = rho00.trace().re;
    let max_trace_drift = samples
        .iter()
        .map(|b| (b.trace() - t0).abs())
        .fold(0.0, f64::max);
    Ok(FullTrajectory {
        taus,
        samples,
        max_trace_drift,
        convergence,
    })
}

pub fn evolve_target(cfg: &GadgetConfig, rho: &CMatrix) -> Result<TargetTrajectory, GadgetError> {
    check_initial(cfg, rho)?;
    let (taus, samples) = integrate_target(cfg, rho, 1);
    let (_, fine) = integrate_target(cfg, rho, 2);
    let convergence = samples
        .iter()
        .zip(&fine)
        .map(|(a, b)| trace_norm(&(a - b)))
        .fold(0.0, f64::max);
    if convergence > cfg.convergence_tol {
        return Err(GadgetError::NotConverged {
            diff: convergence,
            tol: cfg.convergence_tol,
        });
    }
    Ok(TargetTrajectory {
        taus,
        samples,
        convergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    /// Exceeded the bound by less than the numerical margin.
    Inconclusive,
    Violated,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        }
    }

    fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Violated, _) | (_, Violated) => Violated,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Holds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub name: &'static str,
    pub residual: Vec<f64>,
    pub bound: Vec<f64>,
    pub verdict: Verdict,
    /// Sample with the largest `residual − bound`.
    pub worst_index: usize,
}

impl InequalityReport {
    fn new(name: &'static str, residual: Vec<f64>, bound: Vec<f64>, margin: &[f64]) -> Self {
        let mut verdict = Verdict::Holds;
        let mut worst_index = 0;
        let mut worst = f64::NEG_INFINITY;
        for (i, ((&r, &b), &m)) in residual.iter().zip(&bound).zip(margin).enumerate() {
            let excess = r - b;
            if excess > worst {
                worst = excess;
                worst_index = i;
            }
            let v = if excess <= 0.0 {
                Verdict::Holds
            } else if excess <= m {
                Verdict::Inconclusive
            } else {
                Verdict::Violated
            };
            verdict = verdict.worst(v);
        }
        Self {
            name,
            residual,
            bound,
            verdict,
            worst_index,
        }
    }

    pub fn max_excess(&self) -> f64 {
        self.residual[self.worst_index] - self.bound[self.worst_index]
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub norm: Norm,
    pub taus: Vec<f64>,
    /// In order: the a-priori block sizes, the `ρ01` expansion, the `ρ11`
    /// expansion, and the deviation of `ρ̇00` from the target generator.
    pub inequalities: [InequalityReport; 4],
    /// `‖ρ00(τ) − ρ_target(τ)‖` along the two trajectories.
    pub target_deviation: Vec<f64>,
    /// Finite-difference `ρ̇00` residual, for comparison with the exact one.
    pub fd_residual: Vec<f64>,
    pub integrator_tol: f64,
    pub max_trace_drift: f64,
}

impl BoundReport {
    pub fn verdict(&self) -> Verdict {
        self.inequalities
            .iter()
            .fold(Verdict::Holds, |v, r| v.worst(r.verdict))
    }

    /// Largest final-inequality residual over samples with `τ ≥ tau_min`.
    pub fn final_residual_after(&self, tau_min: f64) -> f64 {
        self.taus
            .iter()
            .zip(&self.inequalities[3].residual)
            .filter(|(&t, _)| t >= tau_min)
            .map(|(_, &r)| r)
            .fold(0.0, f64::max)
    }
}

/// Evaluates the four inequalities at every sample.
///
/// The first inequality is reported as `max(‖ρ01‖/ε̃, ‖ρ11‖/ε̃²)` against 1.
/// `ρ̇00` comes from the exact right-hand side; the central finite
/// difference of the samples only widens the margin of the verdict.
pub fn check_bounds(
    cfg: &GadgetConfig,
    full: &FullTrajectory,
    target: &TargetTrajectory,
    norm: Norm,
) -> Result<BoundReport, GadgetError> {
    if full.taus.len() != target.taus.len()
        || full
            .taus
            .iter()
            .zip(&target.taus)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(GadgetError::GridMismatch);
    }
    let n = full.taus.len();
    let eps = cfg.epsilon;
    let e = cfg.e_strength;
    let et = cfg.eps_tilde();
    let c = |x: f64| Complex64::new(x, 0.0);
    let ld = cfg.l.adjoint();
    let mut r = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut b = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut deviation = vec![0.0; n];
    let mut fd_residual = vec![0.0; n];
    let h = cfg.dt * cfg.sample_every as f64;
    for (i, (&tau, s)) in full.taus.iter().zip(&full.samples).enumerate() {
        let decay = (-tau).exp();
        let n01 = norm.of(&s.rho01);
        let n11 = norm.of(&s.rho11);
        r[0][i] = if eps == 0.0 {
            n01.max(n11)
        } else {
            (n01 / et).max(n11 / (et * et))
        };
        b[0][i] = 1.0;

        let lead01 = &s.rho00 * &ld * (c(eps) * I_UNIT);
        r[1][i] = norm.of(&(&s.rho01 - lead01));
        b[1][i] = (2.0 * e + 5.0) * et.powi(3) + eps * decay;

        let lead11 = &cfg.l * &s.rho00 * &ld * c(eps * eps);
        r[2][i] = norm.of(&(&s.rho11 - lead11));
        b[2][i] = (3.0 * e + 7.0) * et.powi(4) + 2.0 * eps * eps * decay;

        let wanted = target_rhs(cfg, &s.rho00);
        let exact = full_rhs(cfg, s).rho00;
        r[3][i] = norm.of(&(&exact - &wanted));
        b[3][i] = (10.0 * e + 24.0) * et.powi(4) + 4.0 * eps * eps * decay;

        let fd = if i == 0 {
            (&full.samples[1].rho00 - &s.rho00) * c(1.0 / h)
        } else if i == n - 1 {
            (&s.rho00 - &full.samples[i - 1].rho00) * c(1.0 / h)
        } else {
            (&full.samples[i + 1].rho00 - &full.samples[i - 1].rho00) * c(0.5 / h)
        };
        fd_residual[i] = norm.of(&(fd - &wanted));
        deviation[i] = norm.of(&(&s.rho00 - &target.samples[i]));
    }
    let tol = full.convergence.max(full.max_trace_drift);
    let margin_blocks = vec![tol; n];
    let margin_first: Vec<f64> = vec![if eps == 0.0 { tol } else { tol / (et * et) }; n];
    // Interior samples only: one-sided differences at the ends are first order.
    let margin_rate: Vec<f64> = (0..n)
        .map(|i| {
            let fd_gap = if i == 0 || i == n - 1 {
                0.0
            } else {
                (fd_residual[i] - r[3][i]).abs()
            };
            fd_gap.max(tol)
        })
        .collect();
    let [r0, r1, r2, r3] = r;
    let [b0, b1, b2, b3] = b;
    Ok(BoundReport {
        norm,
        taus: full.taus.clone(),
        inequalities: [
            InequalityReport::new("block_sizes", r0, b0, &margin_first),
            InequalityReport::new("rho01_expansion", r1, b1, &margin_blocks),
            InequalityReport::new("rho11_expansion", r2, b2, &margin_blocks),
            InequalityReport::new("target_deviation", r3, b3, &margin_rate),
        ],
        target_deviation: deviation,
        fd_residual,
        integrator_tol: tol,
        max_trace_drift: full.max_trace_drift,
    })
}

/// Runs both evolutions from `ρ00(0)` and checks the bounds in `norm`.
pub fn verify(cfg: &GadgetConfig, rho00: &CMatrix, norm: Norm) -> Result<BoundReport, GadgetError> {
    let full = evolve_full(cfg, rho00)?;
    let target = evolve_target(cfg, rho00)?;
    check_bounds(cfg, &full, &target, norm)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Scaling of the post-transient final residual with `ε`: for each `ε`, the
/// largest residual over `τ ≥ window·ln(1/ε)`, then the log-log slope.
pub fn residual_scaling(
    base: &GadgetConfig,
    epsilons: &[f64],
    rho00: &CMatrix,
    window: f64,
) -> Result<(Vec<f64>, f64), GadgetError> {
    let mut maxima = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut cfg = base.clone();
        cfg.epsilon = eps;
        if cfg.e_strength > 0.0 {
            cfg.l_sys = base.l_sys.scaled(eps * eps / (base.epsilon * base.epsilon));
        }
        let report = verify(&cfg, rho00, Norm::Trace)?;
        maxima.push(report.final_residual_after(window * (1.0 / eps).ln()));
    }
    let slope = log_log_slope(epsilons, &maxima);
    Ok((maxima, slope))
}
