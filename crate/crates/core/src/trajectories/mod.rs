//! Monte-Carlo trajectories of the monitored register: conditional state,
//! its ω-derivative and the classical score of the measurement record.

mod stepper;

pub use stepper::{Stepper, MAX_CLICK_PROBABILITY};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrequencyModel, NoiseAxis, Register};
use crate::qops::{pauli_z, qfi_mixed, qfi_pure, ComplexMatrix, Ket, C64};

use stepper::pure_derivative;

/// Step guard: `Δt·κ` and `Δt·|ω|` may not exceed this.
pub const MAX_STEP_RATE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnravelingKind {
    #[serde(alias = "pd")]
    Photodetection,
    #[serde(alias = "hd")]
    Homodyne,
}

impl UnravelingKind {
    pub fn short_name(self) -> &'static str {
        match self {
            UnravelingKind::Photodetection => "pd",
            UnravelingKind::Homodyne => "hd",
        }
    }
}

impl std::fmt::Display for UnravelingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for UnravelingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pd" | "photodetection" => Ok(UnravelingKind::Photodetection),
            "hd" | "homodyne" => Ok(UnravelingKind::Homodyne),
            other => Err(Error::InvalidParameter(format!("unknown unraveling '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnravelingSpec {
    pub kind: UnravelingKind,
    /// One efficiency per channel (qubit).
    pub eta: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
}

impl UnravelingSpec {
    pub fn new(kind: UnravelingKind, eta: Vec<f64>, dt: f64, n_steps: usize) -> Self {
        Self { kind, eta, dt, n_steps }
    }

    /// Same efficiency on all `n_channels` channels.
    pub fn uniform(kind: UnravelingKind, n_channels: usize, eta: f64, dt: f64, n_steps: usize) -> Self {
        Self::new(kind, vec![eta; n_channels], dt, n_steps)
    }

    pub fn t_max(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn is_perfect(&self) -> bool {
        self.eta.iter().all(|&e| e == 1.0)
    }

    pub fn validate(&self, model: &FrequencyModel) -> Result<()> {
        if self.eta.len() != model.n_qubits {
            return Err(Error::InvalidParameter(format!(
                "{} efficiencies given for {} channels",
                self.eta.len(),
                model.n_qubits
            )));
        }
        if let Some(e) = self.eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidParameter(format!("efficiency {e} outside [0, 1]")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        let slack = 1.0 + 1e-12;
        if self.dt * model.kappa > MAX_STEP_RATE * slack {
            return Err(Error::NumericalGuard(format!(
                "time step {} exceeds 0.01/κ = {}",
                self.dt,
                MAX_STEP_RATE / model.kappa
            )));
        }
        if self.dt * model.omega.abs() > MAX_STEP_RATE * slack {
            return Err(Error::NumericalGuard(format!(
                "time step {} exceeds 0.01/|ω| = {}",
                self.dt,
                MAX_STEP_RATE / model.omega.abs()
            )));
        }
        if self.kind == UnravelingKind::Photodetection {
            // Pauli channels: c†c = (κ/2)I, so this bound is attained.
            let total: f64 = self.eta.iter().map(|e| e * model.kappa / 2.0 * self.dt).sum();
            if total > MAX_CLICK_PROBABILITY {
                return Err(Error::NumericalGuard(format!(
                    "click probability {total:.4} per step exceeds {MAX_CLICK_PROBABILITY}; reduce the time step"
                )));
            }
        }
        Ok(())
    }
}

/// Conditional state with its information carrier.
///
/// `score` is `∂ω log p(record)`, which equals `Tr τ` (or `2 Re⟨ψ|φ⟩`); `τ`
/// and `φ` are kept consistent with it, `τ = ∂ωρ + score·ρ`.
#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryState {
    Mixed { rho: ComplexMatrix, tau: ComplexMatrix, score: f64 },
    Pure { psi: Ket, phi: Ket, score: f64 },
}

impl TrajectoryState {
    pub fn pure(psi: Ket) -> Result<Self> {
        if !psi.is_normalized(1e-10) {
            return Err(Error::InvalidState(format!("initial ket has norm {}", psi.norm())));
        }
        let d = psi.dim();
        Ok(Self::Pure { psi, phi: Ket::zeros(d), score: 0.0 })
    }

    pub fn mixed(rho: ComplexMatrix) -> Result<Self> {
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 || !rho.is_hermitian(1e-10) {
            return Err(Error::InvalidState("initial density operator must be Hermitian with unit trace".into()));
        }
        let d = rho.dim();
        Ok(Self::Mixed { rho, tau: ComplexMatrix::zeros(d), score: 0.0 })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Mixed { rho, .. } => rho.dim(),
            Self::Pure { psi, .. } => psi.dim(),
        }
    }

    pub fn score(&self) -> f64 {
        match self {
            Self::Mixed { score, .. } | Self::Pure { score, .. } => *score,
        }
    }

    /// `Tr τ` recomputed from the carrier, for consistency checks.
    pub fn trace_tau(&self) -> f64 {
        match self {
            Self::Mixed { tau, .. } => tau.trace().re,
            Self::Pure { psi, phi, .. } => 2.0 * psi.inner(phi).re,
        }
    }

    pub fn density(&self) -> ComplexMatrix {
        match self {
            Self::Mixed { rho, .. } => rho.clone(),
            Self::Pure { psi, .. } => psi.projector(),
        }
    }

    /// `∂ωρ = τ - Tr[τ] ρ`.
    pub fn density_derivative(&self) -> ComplexMatrix {
        match self {
            Self::Mixed { rho, tau, score } => {
                let mut d = tau.clone();
                d.axpy(C64::new(-*score, 0.0), rho);
                d
            }
            Self::Pure { psi, phi, .. } => {
                let d = pure_derivative(psi, phi);
                let mut out = d.outer(psi);
                out.axpy(C64::new(1.0, 0.0), &psi.outer(&d));
                out
            }
        }
    }

    /// QFI of the conditional state.
    pub fn conditional_qfi(&self) -> Result<f64> {
        match self {
            Self::Mixed { rho, .. } => qfi_mixed(rho, &self.density_derivative()),
            Self::Pure { psi, phi, .. } => qfi_pure(psi, &pure_derivative(psi, phi)),
        }
    }
}

/// Outcome of one step.
#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    /// Record increments `Δy_j`.
    Homodyne(Vec<f64>),
    /// Index of the clicking channel, if any.
    Photodetection(Option<usize>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementRecord {
    pub steps: Vec<StepOutcome>,
}

impl MeasurementRecord {
    pub fn clicks(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, StepOutcome::Photodetection(Some(_)))).count()
    }
}

/// Independent stream for trajectory `traj_index` under global `seed`.
pub fn trajectory_rng(seed: u64, traj_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_index);
    rng
}

/// Which engine runs the trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationPath {
    /// Parallel noise, photodetection, GHZ-span probe: two-level reduction.
    GhzParallel,
    /// All efficiencies one: state vectors.
    Pure,
    /// Density operators.
    Mixed,
}

/// Per-grid-point trajectory output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// `Tr τ = ∂ω log p(record)`.
    pub score: f64,
    pub q_cond: f64,
}

/// A configured trajectory engine: stepper, initial state and path.
#[derive(Clone, Debug)]
pub struct Simulation {
    stepper: Stepper,
    initial: TrajectoryState,
    path: SimulationPath,
    n_steps: usize,
}

impl Simulation {
    /// Picks the cheapest exact path for the problem.
    pub fn new(model: &FrequencyModel, spec: &UnravelingSpec, psi0: &Ket) -> Result<Self> {
        let path = if model.noise_axis == NoiseAxis::Parallel
            && spec.kind == UnravelingKind::Photodetection
            && ghz_subspace_ket(psi0).is_ok()
        {
            SimulationPath::GhzParallel
        } else if spec.is_perfect() {
            SimulationPath::Pure
        } else {
            SimulationPath::Mixed
        };
        Self::with_path(model, spec, psi0, path)
    }

    pub fn with_path(model: &FrequencyModel, spec: &UnravelingSpec, psi0: &Ket, path: SimulationPath) -> Result<Self> {
        model.validate()?;
        spec.validate(model)?;
        model.check_dense()?;
        if psi0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: psi0.dim() });
        }
        if !psi0.is_normalized(1e-10) {
            return Err(Error::InvalidState(format!("initial ket has norm {}", psi0.norm())));
        }
        let (stepper, initial) = match path {
            SimulationPath::GhzParallel => return Self::ghz_parallel(model, spec, &ghz_subspace_ket(psi0)?),
            SimulationPath::Pure => {
                if !spec.is_perfect() {
                    return Err(Error::InvalidParameter(
                        "pure-state path requires unit efficiency on every channel".into(),
                    ));
                }
                (Stepper::new(&model.register(), spec.kind, &spec.eta, spec.dt)?, TrajectoryState::pure(psi0.clone())?)
            }
            SimulationPath::Mixed => (
                Stepper::new(&model.register(), spec.kind, &spec.eta, spec.dt)?,
                TrajectoryState::mixed(psi0.projector())?,
            ),
        };
        Ok(Self { stepper, initial, path, n_steps: spec.n_steps })
    }

    /// Two-level reduction started from `α|0…0⟩ + β|1…1⟩`, passed as the
    /// reduced ket `(α, β)`. Needs no `2^N` storage, so any `N` is accepted.
    pub fn ghz_parallel(model: &FrequencyModel, spec: &UnravelingSpec, reduced: &Ket) -> Result<Self> {
        model.validate()?;
        spec.validate(model)?;
        if reduced.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: reduced.dim() });
        }
        let stepper = ghz_parallel_stepper(model, spec)?;
        let initial = if spec.is_perfect() {
            TrajectoryState::pure(reduced.clone())?
        } else {
            TrajectoryState::mixed(reduced.projector())?
        };
        Ok(Self { stepper, initial, path: SimulationPath::GhzParallel, n_steps: spec.n_steps })
    }

    pub fn path(&self) -> SimulationPath {
        self.path
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn initial_state(&self) -> &TrajectoryState {
        &self.initial
    }

    /// Step indices of the grid times; each must be a multiple of `Δt`
    /// within `1e-9` relative and no later than `n_steps·Δt`.
    pub fn grid_steps(&self, t_grid: &[f64]) -> Result<Vec<usize>> {
        crate::lindblad::check_time_grid(t_grid)?;
        let dt = self.stepper.dt();
        t_grid
            .iter()
            .map(|&t| {
                let k = (t / dt).round();
                if (k * dt - t).abs() > 1e-9 * t.max(dt) {
                    return Err(Error::InvalidParameter(format!("grid time {t} is not a multiple of Δt = {dt}")));
                }
                let k = k as usize;
                if k > self.n_steps {
                    return Err(Error::InvalidParameter(format!(
                        "grid time {t} lies beyond n_steps·Δt = {}",
                        self.n_steps as f64 * dt
                    )));
                }
                Ok(k)
            })
            .collect()
    }

    /// Draws the randomness for one step and advances the state.
    pub fn step(&self, state: &mut TrajectoryState, rng: &mut ChaCha8Rng) -> Result<StepOutcome> {
        match self.stepper.kind() {
            UnravelingKind::Photodetection => {
                let u: f64 = rng.random();
                self.stepper.photodetection_step(state, u)
            }
            UnravelingKind::Homodyne => {
                let sq = self.stepper.dt().sqrt();
                let dw: Vec<f64> =
                    (0..self.stepper.n_channels()).map(|_| sq * rng.sample::<f64, _>(StandardNormal)).collect();
                self.stepper.homodyne_step(state, &dw)
            }
        }
    }

    /// Runs one trajectory and samples `(Tr τ, Q_cond)` at each grid time.
    pub fn run(&self, t_grid: &[f64], seed: u64, traj_index: u64) -> Result<Vec<TrajectorySample>> {
        let steps = self.grid_steps(t_grid)?;
        let mut rng = trajectory_rng(seed, traj_index);
        let mut state = self.initial.clone();
        let mut done = 0;
        let mut out = Vec::with_capacity(steps.len());
        for k in steps {
            while done < k {
                self.step(&mut state, &mut rng)?;
                done += 1;
            }
            out.push(TrajectorySample { score: state.score(), q_cond: state.conditional_qfi()? });
        }
        Ok(out)
    }

    /// Runs `n_steps` steps, returning the final state and the record.
    pub fn run_recorded(
        &self,
        n_steps: usize,
        seed: u64,
        traj_index: u64,
    ) -> Result<(TrajectoryState, MeasurementRecord)> {
        let mut rng = trajectory_rng(seed, traj_index);
        let mut state = self.initial.clone();
        let mut record = MeasurementRecord::default();
        for _ in 0..n_steps {
            record.steps.push(self.step(&mut state, &mut rng)?);
        }
        Ok((state, record))
    }
}

/// Two-level reduction for parallel noise on GHZ-span probes: `|0…0⟩ -> |0̄⟩`,
/// `|1…1⟩ -> |1̄⟩`, with `h̄ = (Nω/2)σ̄z`, `ḡ = (N/2)σ̄z`,
/// `c̄ = √(Nκ/2) σ̄z` and the mean efficiency. Every `σz⁽ʲ⁾` acts on the span
/// as `σ̄z`, so the merged channel reproduces both the click rate
/// `Σ_j η_j κ/2` and the inefficiency term `Σ_j (1-η_j)(κ/2) σ̄z ρ σ̄z`.
pub fn ghz_parallel_stepper(model: &FrequencyModel, spec: &UnravelingSpec) -> Result<Stepper> {
    if model.noise_axis != NoiseAxis::Parallel {
        return Err(Error::InvalidParameter("two-level reduction needs parallel noise".into()));
    }
    if spec.kind != UnravelingKind::Photodetection {
        return Err(Error::InvalidParameter("two-level reduction is implemented for photodetection".into()));
    }
    let n = model.n_qubits as f64;
    let z = pauli_z();
    let reg = Register {
        n_qubits: 1,
        h: z * C64::new(n * model.omega / 2.0, 0.0),
        g: z * C64::new(n / 2.0, 0.0),
        collapse: z * C64::new((n * model.kappa / 2.0).sqrt(), 0.0),
    };
    let eta_mean = spec.eta.iter().sum::<f64>() / spec.eta.len() as f64;
    Stepper::new(&reg, spec.kind, &[eta_mean], spec.dt)
}

/// Amplitudes of `psi` on `|0…0⟩` and `|1…1⟩`; fails unless the rest vanishes.
pub fn ghz_subspace_ket(psi: &Ket) -> Result<Ket> {
    let d = psi.dim();
    if d < 2 {
        return Err(Error::InvalidState("empty register".into()));
    }
    let outside: f64 = psi.as_slice()[1..d - 1].iter().map(|z| z.norm_sqr()).sum();
    if outside > 1e-24 {
        return Err(Error::InvalidState("initial state is not in the span of |0…0⟩ and |1…1⟩".into()));
    }
    Ok(Ket::from_vec(vec![psi[0], psi[d - 1]]))
}

pub fn run_trajectory(
    model: &FrequencyModel,
    spec: &UnravelingSpec,
    psi0: &Ket,
    t_grid: &[f64],
    seed: u64,
    traj_index: u64,
) -> Result<Vec<TrajectorySample>> {
    Simulation::new(model, spec, psi0)?.run(t_grid, seed, traj_index)
}
