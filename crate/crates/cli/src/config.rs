//! Run configuration: built-in defaults, overlaid by a JSON file, overlaid
//! by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use monqfi_core::model::MAX_QUBITS;
use monqfi_core::{coherent_spin_state, ghz_state, FrequencyModel, Ket, NoiseAxis, UnravelingKind, UnravelingSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unconditional,
    Ultimate,
    Effective,
    All,
}

impl Mode {
    pub fn unconditional(self) -> bool {
        matches!(self, Mode::Unconditional | Mode::All)
    }

    pub fn ultimate(self) -> bool {
        matches!(self, Mode::Ultimate | Mode::All)
    }

    pub fn effective(self) -> bool {
        matches!(self, Mode::Effective | Mode::All)
    }
}

/// Initial probe state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProbeState {
    /// `(|0…0⟩ + |1…1⟩)/√2`
    Ghz,
    /// `|+⟩^⊗N`
    Coherent,
}

/// One efficiency for every channel, or one per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Efficiency {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

impl Efficiency {
    pub fn per_channel(&self, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Efficiency::Uniform(e) => Ok(vec![*e; n]),
            Efficiency::PerChannel(v) if v.len() == 1 => Ok(vec![v[0]; n]),
            Efficiency::PerChannel(v) if v.len() == n => Ok(v.clone()),
            Efficiency::PerChannel(v) => Err(CliError::Usage(format!("eta lists {} values for N = {n}", v.len()))),
        }
    }

    /// Short label for plot keys: the value, or values joined by `;`.
    pub fn label(&self) -> String {
        match self {
            Efficiency::Uniform(e) => e.to_string(),
            Efficiency::PerChannel(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

/// A fully resolved run. Field names double as JSON keys and flag names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: NoiseAxis,
    #[serde(rename = "N")]
    pub n: usize,
    pub omega: f64,
    pub kappa: f64,
    pub eta: Efficiency,
    pub unraveling: UnravelingKind,
    pub tmax: f64,
    pub steps: usize,
    /// Steps between output rows.
    pub stride: usize,
    pub ntraj: usize,
    pub seed: u64,
    pub mode: Mode,
    pub state: ProbeState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

/// Same keys as [`RunConfig`], all optional; used for config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub model: Option<NoiseAxis>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub omega: Option<f64>,
    pub kappa: Option<f64>,
    pub eta: Option<Efficiency>,
    pub unraveling: Option<UnravelingKind>,
    pub tmax: Option<f64>,
    pub steps: Option<usize>,
    pub stride: Option<usize>,
    pub ntraj: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub state: Option<ProbeState>,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// Noise axis: parallel (σz) or transverse (σx)
    #[arg(long)]
    pub model: Option<NoiseAxis>,
    /// Number of qubits
    #[arg(long = "N", visible_alias = "n")]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Detection efficiency, or a comma-separated list with one per qubit
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    /// pd (photodetection) or hd (homodyne)
    #[arg(long)]
    pub unraveling: Option<UnravelingKind>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Number of time steps up to tmax
    #[arg(long)]
    pub steps: Option<usize>,
    /// Time steps between output rows; must divide --steps
    #[arg(long)]
    pub stride: Option<usize>,
    /// Number of trajectories for the effective QFI
    #[arg(long)]
    pub ntraj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub state: Option<ProbeState>,
    /// JSON file with any of the above keys; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    /// CSV output path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path (defaults to the CSV path with extension .manifest.json)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Worker threads (defaults to all cores; results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunArgs {
    fn as_partial(&self) -> PartialConfig {
        PartialConfig {
            model: self.model,
            n: self.n,
            omega: self.omega,
            kappa: self.kappa,
            eta: self
                .eta
                .clone()
                .map(|v| if v.len() == 1 { Efficiency::Uniform(v[0]) } else { Efficiency::PerChannel(v) }),
            unraveling: self.unraveling,
            tmax: self.tmax,
            steps: self.steps,
            stride: self.stride,
            ntraj: self.ntraj,
            seed: self.seed,
            mode: self.mode,
            state: self.state,
            out: self.out.clone(),
            manifest: self.manifest.clone(),
        }
    }
}

impl PartialConfig {
    /// Values from `top` win.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        PartialConfig {
            model: top.model.or(self.model),
            n: top.n.or(self.n),
            omega: top.omega.or(self.omega),
            kappa: top.kappa.or(self.kappa),
            eta: top.eta.or(self.eta),
            unraveling: top.unraveling.or(self.unraveling),
            tmax: top.tmax.or(self.tmax),
            steps: top.steps.or(self.steps),
            stride: top.stride.or(self.stride),
            ntraj: top.ntraj.or(self.ntraj),
            seed: top.seed.or(self.seed),
            mode: top.mode.or(self.mode),
            state: top.state.or(self.state),
            out: top.out.or(self.out),
            manifest: top.manifest.or(self.manifest),
        }
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let steps = self.steps.unwrap_or(1000);
        let cfg = RunConfig {
            model: self.model.unwrap_or(NoiseAxis::Parallel),
            n: self.n.unwrap_or(2),
            omega: self.omega.unwrap_or(1.0),
            kappa: self.kappa.unwrap_or(1.0),
            eta: self.eta.unwrap_or(Efficiency::Uniform(1.0)),
            unraveling: self.unraveling.unwrap_or(UnravelingKind::Photodetection),
            tmax: self.tmax.unwrap_or(1.0),
            steps,
            stride: self.stride.unwrap_or_else(|| default_stride(steps)),
            ntraj: self.ntraj.unwrap_or(1000),
            seed: self.seed.unwrap_or(0),
            mode: self.mode.unwrap_or(Mode::All),
            state: self.state.unwrap_or(ProbeState::Ghz),
            out: self.out,
            manifest: self.manifest,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Smallest divisor of `steps` giving at most 100 rows after `t = 0`.
fn default_stride(steps: usize) -> usize {
    (1..=steps.max(1)).find(|d| steps.is_multiple_of(*d) && steps / d <= 100).unwrap_or(1)
}

pub fn read_partial(path: &Path) -> Result<PartialConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Defaults, then the config file, then flags.
pub fn from_args(args: &RunArgs) -> Result<RunConfig, CliError> {
    let base = match &args.config {
        Some(path) => read_partial(path)?,
        None => PartialConfig::default(),
    };
    base.overlay(args.as_partial()).resolve()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if !self.omega.is_finite() {
            return bad(format!("omega must be finite, got {}", self.omega));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        let eta = self.eta.per_channel(self.n)?;
        if let Some(e) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad(format!("eta must lie in [0, 1], got {e}"));
        }
        if !(self.tmax > 0.0 && self.tmax.is_finite()) {
            return bad(format!("tmax must be positive, got {}", self.tmax));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.stride == 0 || !self.steps.is_multiple_of(self.stride) {
            return bad(format!("stride {} does not divide steps {}", self.stride, self.steps));
        }
        if self.mode.effective() && self.ntraj < 2 {
            return bad(format!("ntraj must be at least 2, got {}", self.ntraj));
        }
        if self.n > MAX_QUBITS && !self.reduced_ghz() {
            return bad(format!(
                "N = {} exceeds {MAX_QUBITS}; larger registers are only supported for the parallel GHZ \
                 probe under photodetection",
                self.n
            ));
        }
        Ok(())
    }

    /// True when the run never needs the dense `2^N` register.
    pub fn reduced_ghz(&self) -> bool {
        self.model == NoiseAxis::Parallel
            && self.state == ProbeState::Ghz
            && (!self.mode.effective() || self.unraveling == UnravelingKind::Photodetection)
    }

    pub fn dt(&self) -> f64 {
        self.tmax / self.steps as f64
    }

    /// Row times `k·stride·Δt`, starting at 0.
    pub fn grid(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps / self.stride).map(|k| (k * self.stride) as f64 * dt).collect()
    }

    pub fn frequency_model(&self) -> Result<FrequencyModel, CliError> {
        Ok(FrequencyModel::new(self.n, self.omega, self.kappa, self.model)?)
    }

    pub fn unraveling_spec(&self) -> Result<UnravelingSpec, CliError> {
        Ok(UnravelingSpec::new(self.unraveling, self.eta.per_channel(self.n)?, self.dt(), self.steps))
    }

    /// Dense probe state; only valid when `N` fits in memory.
    pub fn probe(&self) -> Ket {
        match self.state {
            ProbeState::Ghz => ghz_state(self.n),
            ProbeState::Coherent => coherent_spin_state(self.n),
        }
    }

    /// Resolved manifest path, if any.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| self.out.as_ref().map(|p| p.with_extension("manifest.json")))
    }
}
