//! Scenario files: strict TOML schema, validation into SI values, hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::units::{self, Dimension};

/// A dimensioned value as written in the file. Bare numbers are rejected
/// during validation so that every quantity carries its unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Qty {
    Text(String),
    Number(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Analyze,
    Evolve,
    ErrorBudget,
    Gates,
    Sense,
    Compare,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Analyze => "analyze",
            Protocol::Evolve => "evolve",
            Protocol::ErrorBudget => "error-budget",
            Protocol::Gates => "gates",
            Protocol::Sense => "sense",
            Protocol::Compare => "compare",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Ca40,
    D32P12,
    D52P32,
    HyperfineF1F2,
    HyperfineF0F1,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    Ideal,
    Compact,
    Hyperfine,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pol {
    #[serde(rename = "sigma+")]
    SigmaPlus,
    #[serde(rename = "sigma-")]
    SigmaMinus,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindCfg {
    OrnsteinUhlenbeck,
    QuasiStatic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    D1,
    D2,
    #[default]
    Plus,
    /// Lowest-m bare state of the qubit manifold; it is not dark, so the
    /// trace shows the bright-state Rabi oscillation.
    Lowest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Auto,
    Unitary,
    Lindblad,
    Noisy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    #[default]
    Locked,
    RandomAveraged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DeltaB,
    Omega,
    Epsilon,
    EpsilonPol,
    Sigma,
}

impl SweepParam {
    pub fn protocol(self) -> Protocol {
        match self {
            SweepParam::Sigma => Protocol::Compare,
            _ => Protocol::ErrorBudget,
        }
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            SweepParam::DeltaB | SweepParam::Omega | SweepParam::Sigma => Some(Dimension::Frequency),
            SweepParam::Epsilon | SweepParam::EpsilonPol => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::DeltaB => "delta_b",
            SweepParam::Omega => "omega",
            SweepParam::Epsilon => "epsilon",
            SweepParam::EpsilonPol => "epsilon_pol",
            SweepParam::Sigma => "sigma",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

pub use darkqubit_core::sensing::{ReadoutBasis, SensingScheme};

// ---------------------------------------------------------------- raw form

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub protocols: Vec<Protocol>,
    pub scheme: RawScheme,
    pub construction: RawConstruction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<RawNoise>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<RawEvolve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<RawErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<RawGates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<RawSense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<RawCompare>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScheme {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical_gap: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf_splitting: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manifolds: Vec<RawManifold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decays: Vec<RawDecay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManifold {
    pub name: String,
    pub j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    pub g: f64,
    pub offset: Qty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDecay {
    pub upper: String,
    pub lower: String,
    pub rate: Qty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConstruction {
    pub kind: ConstructionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Qty>,
    pub field: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<String>,
    #[serde(default)]
    pub amp_error_plus: f64,
    #[serde(default)]
    pub amp_error_minus: f64,
    #[serde(default)]
    pub pol_leak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rwa_cutoff: Option<Qty>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drives: Vec<RawDrive>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDrive {
    pub lower: String,
    pub upper: String,
    pub polarization: Pol,
    pub frequency: Qty,
    pub rabi: Qty,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    pub kind: NoiseKindCfg,
    pub sigma: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_c: Option<Qty>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvolve {
    #[serde(default)]
    pub initial: Initial,
    pub duration: Qty,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_traj")]
    pub n_traj: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawErrors {
    pub delta_b: Qty,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub epsilon_pol: f64,
    pub t2_star: Qty,
    #[serde(default)]
    pub cross_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGates {
    pub omega_g: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_r: Option<Qty>,
    #[serde(default = "default_periods")]
    pub probe_periods: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSense {
    pub scheme: SensingScheme,
    pub signal_rabi: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_freq: Option<Qty>,
    #[serde(default)]
    pub phase: PhaseMode,
    #[serde(default)]
    pub phase_value: f64,
    #[serde(default = "default_traj")]
    pub draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interrogation_time: Option<Qty>,
    #[serde(default)]
    pub readout_basis: ReadoutBasis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<Qty>,
    #[serde(default = "default_detuning_factor")]
    pub detuning_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<RawWindow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWindow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_target: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<Qty>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCompare {
    #[serde(default = "default_traj")]
    pub n_traj: usize,
    pub t_max: Qty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub parameter: SweepParam,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_points() -> usize {
    201
}

fn default_traj() -> usize {
    256
}

fn default_periods() -> usize {
    4
}

fn default_detuning_factor() -> f64 {
    10.0
}

// ---------------------------------------------------------------- normalized form

#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub seed: u64,
    pub protocols: Vec<Protocol>,
    pub scheme: SchemeSpec,
    pub construction: ConstructionSpec,
    pub noise: Option<NoiseSpec>,
    pub evolve: Option<EvolveSpec>,
    pub errors: Option<ErrorsSpec>,
    pub gates: Option<GatesSpec>,
    pub sense: Option<SenseSpec>,
    pub compare: Option<CompareSpec>,
    pub sweep: Option<SweepSpec>,
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifoldSpec {
    pub name: String,
    pub j: f64,
    pub l: Option<u32>,
    pub g: f64,
    pub offset: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySpec {
    pub upper: String,
    pub lower: String,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeSpec {
    pub preset: Preset,
    pub optical_gap: Option<f64>,
    pub gamma: f64,
    pub hf_splitting: Option<f64>,
    pub g: Option<f64>,
    pub manifolds: Vec<ManifoldSpec>,
    pub decays: Vec<DecaySpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriveSpec {
    pub lower: String,
    pub upper: String,
    pub polarization: Pol,
    pub frequency: f64,
    pub rabi: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstructionSpec {
    pub kind: ConstructionKind,
    pub omega: f64,
    pub field: f64,
    pub lower: String,
    pub upper: String,
    pub amp_error_plus: f64,
    pub amp_error_minus: f64,
    pub pol_leak: f64,
    pub rwa_cutoff: Option<f64>,
    pub drives: Vec<DriveSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSpec {
    pub kind: NoiseKindCfg,
    pub sigma: f64,
    pub tau_c: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolveSpec {
    pub initial: Initial,
    pub duration: f64,
    pub points: usize,
    pub method: Method,
    pub n_traj: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorsSpec {
    pub delta_b: f64,
    pub epsilon: f64,
    pub epsilon_pol: f64,
    pub t2_star: f64,
    pub cross_check: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GatesSpec {
    pub omega_g: f64,
    pub delta_r: Option<f64>,
    pub probe_periods: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowSpec {
    pub t1_target: f64,
    pub threshold: f64,
    pub min_gap: f64,
    pub max_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SenseSpec {
    pub scheme: SensingScheme,
    pub signal_rabi: f64,
    pub signal_freq: Option<f64>,
    pub phase: PhaseMode,
    pub phase_value: f64,
    pub draws: usize,
    pub interrogation_time: Option<f64>,
    pub readout_basis: ReadoutBasis,
    pub t2: Option<f64>,
    pub detuning_factor: f64,
    pub window: Option<WindowSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSpec {
    pub n_traj: usize,
    pub t_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

// ---------------------------------------------------------------- validation

#[derive(Debug)]
pub enum ScenarioError {
    Parse(String),
    Invalid(Vec<String>),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::Parse(m) => write!(f, "scenario does not parse: {m}"),
            ScenarioError::Invalid(errs) => {
                writeln!(f, "scenario has {} invalid field(s):", errs.len())?;
                for e in errs {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Default)]
struct Check {
    errors: Vec<String>,
}

impl Check {
    fn push(&mut self, field: &str, msg: impl AsRef<str>) {
        self.errors.push(format!("{field}: {}", msg.as_ref()));
    }

    fn qty(&mut self, field: &str, q: &Qty, dim: Dimension) -> f64 {
        match q {
            Qty::Number(x) => {
                self.push(field, format!("bare number {x} has no unit; expected {}", dim.expected()));
                f64::NAN
            }
            Qty::Text(t) => match units::parse(t, dim) {
                Ok(v) => v,
                Err(e) => {
                    self.push(field, e);
                    f64::NAN
                }
            },
        }
    }

    fn positive(&mut self, field: &str, q: &Qty, dim: Dimension) -> f64 {
        let v = self.qty(field, q, dim);
        if v.is_finite() && v <= 0.0 {
            self.push(field, format!("must be positive; expected {}", dim.expected()));
        }
        v
    }

    fn non_negative(&mut self, field: &str, q: &Qty, dim: Dimension) -> f64 {
        let v = self.qty(field, q, dim);
        if v < 0.0 {
            self.push(field, format!("must be non-negative; expected {}", dim.expected()));
        }
        v
    }

    fn fraction(&mut self, field: &str, x: f64, max: f64) -> f64 {
        if !(0.0..max).contains(&x.abs()) || !x.is_finite() {
            self.push(field, format!("dimensionless magnitude below {max} expected, got {x}"));
        }
        x
    }

    fn count(&mut self, field: &str, n: usize, min: usize) -> usize {
        if n < min {
            self.push(field, format!("must be at least {min}, got {n}"));
        }
        n
    }

    fn need<'a, T>(&mut self, field: &str, v: &'a Option<T>, why: &str) -> Option<&'a T> {
        if v.is_none() {
            self.push(field, format!("required {why}"));
        }
        v.as_ref()
    }
}

impl RawScenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Every offending field is reported, not just the first.
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        let mut c = Check::default();
        let f = Dimension::Frequency;
        let t = Dimension::Time;

        if self.name.trim().is_empty() {
            c.push("name", "must not be empty");
        }
        let mut seen = Vec::new();
        for p in &self.protocols {
            if seen.contains(p) {
                c.push("protocols", format!("{} listed twice", p.name()));
            }
            seen.push(*p);
        }

        // scheme
        let s = &self.scheme;
        let optical = matches!(s.preset, Preset::Ca40 | Preset::D32P12 | Preset::D52P32);
        let hyperfine = matches!(s.preset, Preset::HyperfineF1F2 | Preset::HyperfineF0F1);
        let optical_gap = s.optical_gap.as_ref().map(|q| c.positive("scheme.optical_gap", q, f));
        if optical && optical_gap.is_none() {
            c.push("scheme.optical_gap", format!("required for preset {:?}; expected {}", s.preset, f.expected()));
        }
        let gamma = s.gamma.as_ref().map(|q| c.non_negative("scheme.gamma", q, f)).unwrap_or(0.0);
        let hf_splitting = s.hf_splitting.as_ref().map(|q| c.positive("scheme.hf_splitting", q, f));
        if hyperfine {
            if hf_splitting.is_none() {
                c.push("scheme.hf_splitting", format!("required for hyperfine presets; expected {}", f.expected()));
            }
            if s.g.is_none() {
                c.push("scheme.g", "required for hyperfine presets (dimensionless |g_F|)");
            }
        }
        let mut manifolds = Vec::new();
        let mut decays = Vec::new();
        if s.preset == Preset::Custom {
            if s.manifolds.is_empty() {
                c.push("scheme.manifolds", "custom scheme needs at least one manifold");
            }
            for (k, m) in s.manifolds.iter().enumerate() {
                let field = format!("scheme.manifolds[{k}].offset");
                let offset = c.qty(&field, &m.offset, f);
                if !(m.j >= 0.0) || (2.0 * m.j).fract() != 0.0 {
                    c.push(
                        &format!("scheme.manifolds[{k}].j"),
                        format!("must be a non-negative multiple of 1/2, got {}", m.j),
                    );
                }
                manifolds.push(ManifoldSpec { name: m.name.clone(), j: m.j, l: m.l, g: m.g, offset });
            }
            for (k, d) in s.decays.iter().enumerate() {
                let rate = c.non_negative(&format!("scheme.decays[{k}].rate"), &d.rate, f);
                decays.push(DecaySpec { upper: d.upper.clone(), lower: d.lower.clone(), rate });
            }
        } else if !s.manifolds.is_empty() || !s.decays.is_empty() {
            c.push("scheme.manifolds", "only allowed with preset = \"custom\"");
        }
        let scheme = SchemeSpec { preset: s.preset, optical_gap, gamma, hf_splitting, g: s.g, manifolds, decays };

        // construction
        let k = &self.construction;
        let field = c.non_negative("construction.field", &k.field, f);
        let omega = match (&k.omega, k.kind) {
            (Some(q), _) => c.non_negative("construction.omega", q, f),
            (None, ConstructionKind::Custom) => 0.0,
            (None, _) => {
                c.push("construction.omega", format!("required; expected {}", f.expected()));
                f64::NAN
            }
        };
        let amp_error_plus = c.fraction("construction.amp_error_plus", k.amp_error_plus, 0.5);
        let amp_error_minus = c.fraction("construction.amp_error_minus", k.amp_error_minus, 0.5);
        let pol_leak = c.fraction("construction.pol_leak", k.pol_leak, 1.0);
        let rwa_cutoff = k.rwa_cutoff.as_ref().map(|q| c.positive("construction.rwa_cutoff", q, f));
        let (dl, du) = match s.preset {
            Preset::D52P32 => ("D5/2", "P3/2"),
            _ => ("D3/2", "P1/2"),
        };
        match k.kind {
            ConstructionKind::Hyperfine if !hyperfine => {
                c.push("construction.kind", "hyperfine construction needs a hyperfine preset")
            }
            ConstructionKind::Ideal | ConstructionKind::Compact if hyperfine => {
                c.push("construction.kind", "optical constructions need an optical or custom scheme")
            }
            ConstructionKind::Custom if k.drives.is_empty() => {
                c.push("construction.drives", "custom construction needs at least one drive")
            }
            _ => {}
        }
        if k.kind != ConstructionKind::Custom && !k.drives.is_empty() {
            c.push("construction.drives", "only allowed with kind = \"custom\"");
        }
        if k.kind != ConstructionKind::Compact
            && (k.amp_error_plus != 0.0 || k.amp_error_minus != 0.0 || k.pol_leak != 0.0)
        {
            c.push("construction.amp_error_plus", "drive imperfections apply to the compact construction only");
        }
        let mut drives = Vec::new();
        for (i, d) in k.drives.iter().enumerate() {
            let frequency = c.non_negative(&format!("construction.drives[{i}].frequency"), &d.frequency, f);
            let rabi = c.non_negative(&format!("construction.drives[{i}].rabi"), &d.rabi, f);
            drives.push(DriveSpec {
                lower: d.lower.clone(),
                upper: d.upper.clone(),
                polarization: d.polarization,
                frequency,
                rabi,
                phase: d.phase,
            });
        }
        let construction = ConstructionSpec {
            kind: k.kind,
            omega,
            field,
            lower: k.lower.clone().unwrap_or_else(|| dl.to_string()),
            upper: k.upper.clone().unwrap_or_else(|| du.to_string()),
            amp_error_plus,
            amp_error_minus,
            pol_leak,
            rwa_cutoff,
            drives,
        };

        // physics sections
        let noise = self.noise.as_ref().map(|n| {
            let sigma = c.non_negative("noise.sigma", &n.sigma, f);
            let tau_c = n.tau_c.as_ref().map(|q| c.positive("noise.tau_c", q, t));
            match (n.kind, tau_c) {
                (NoiseKindCfg::OrnsteinUhlenbeck, None) => {
                    c.push("noise.tau_c", format!("required for ornstein-uhlenbeck noise; expected {}", t.expected()))
                }
                (NoiseKindCfg::QuasiStatic, Some(_)) => c.push("noise.tau_c", "not used by quasi-static noise"),
                _ => {}
            }
            NoiseSpec { kind: n.kind, sigma, tau_c }
        });
        let evolve = self.evolve.as_ref().map(|e| {
            if e.method == Method::Noisy && self.noise.is_none() {
                c.push("evolve.method", "noisy evolution needs a [noise] section");
            }
            EvolveSpec {
                initial: e.initial,
                duration: c.positive("evolve.duration", &e.duration, t),
                points: c.count("evolve.points", e.points, 2),
                method: e.method,
                n_traj: c.count("evolve.n_traj", e.n_traj, 1),
            }
        });
        let errors = self.errors.as_ref().map(|e| ErrorsSpec {
            delta_b: c.non_negative("errors.delta_b", &e.delta_b, f),
            epsilon: c.fraction("errors.epsilon", e.epsilon, 0.5),
            epsilon_pol: c.fraction("errors.epsilon_pol", e.epsilon_pol, 1.0),
            t2_star: c.positive("errors.t2_star", &e.t2_star, t),
            cross_check: e.cross_check,
        });
        let gates = self.gates.as_ref().map(|g| GatesSpec {
            omega_g: c.non_negative("gates.omega_g", &g.omega_g, f),
            delta_r: g.delta_r.as_ref().map(|q| c.positive("gates.delta_r", q, f)),
            probe_periods: c.count("gates.probe_periods", g.probe_periods, 1),
        });
        let sense = self.sense.as_ref().map(|x| {
            let interrogation_time =
                x.interrogation_time.as_ref().map(|q| c.positive("sense.interrogation_time", q, t));
            if x.scheme == SensingScheme::OpticalD32 {
                c.need("sense.interrogation_time", &x.interrogation_time, "for the optical scheme; expected a time");
            } else if hyperfine && x.signal_freq.is_some() {
                c.push("sense.signal_freq", "the hyperfine scheme sets the signal frequency itself");
            }
            if (x.scheme == SensingScheme::Hyperfine) != hyperfine {
                c.push("sense.scheme", "must match the level scheme (hyperfine presets use scheme = \"hyperfine\")");
            }
            if !(x.detuning_factor > 0.0) {
                c.push("sense.detuning_factor", "must be positive");
            }
            let window = x.window.as_ref().map(|w| {
                let d = darkqubit_core::sensing::WindowOptions::default();
                WindowSpec {
                    t1_target: w
                        .t1_target
                        .as_ref()
                        .map(|q| c.positive("sense.window.t1_target", q, t))
                        .unwrap_or(d.t1_target),
                    threshold: w.threshold.unwrap_or(d.threshold),
                    min_gap: w
                        .min_gap
                        .as_ref()
                        .map(|q| c.non_negative("sense.window.min_gap", q, f))
                        .unwrap_or(d.min_gap),
                    max_gap: w.max_gap.as_ref().map(|q| c.positive("sense.window.max_gap", q, f)).unwrap_or(d.max_gap),
                }
            });
            if window.is_some() && self.noise.is_none() {
                c.push("sense.window", "the frequency window needs a [noise] section");
            }
            SenseSpec {
                scheme: x.scheme,
                signal_rabi: c.non_negative("sense.signal_rabi", &x.signal_rabi, f),
                signal_freq: x.signal_freq.as_ref().map(|q| c.positive("sense.signal_freq", q, f)),
                phase: x.phase,
                phase_value: x.phase_value,
                draws: c.count("sense.draws", x.draws, 1),
                interrogation_time,
                readout_basis: x.readout_basis,
                t2: x.t2.as_ref().map(|q| c.positive("sense.t2", q, t)),
                detuning_factor: x.detuning_factor,
                window,
            }
        });
        let compare = self.compare.as_ref().map(|x| CompareSpec {
            n_traj: c.count("compare.n_traj", x.n_traj, 1),
            t_max: c.positive("compare.t_max", &x.t_max, t),
        });
        let sweep = self.sweep.as_ref().map(|x| {
            let read = |c: &mut Check, field: &str, q: &Qty| match x.parameter.dimension() {
                Some(d) => c.positive(field, q, d),
                None => match q {
                    Qty::Number(v) => *v,
                    Qty::Text(s) => {
                        c.push(
                            field,
                            format!("{} is dimensionless; write a plain number, not {s:?}", x.parameter.name()),
                        );
                        f64::NAN
                    }
                },
            };
            let mut values = Vec::new();
            for (i, q) in x.values.iter().enumerate() {
                values.push(read(&mut c, &format!("sweep.values[{i}]"), q));
            }
            match (&x.start, &x.stop, x.points, x.values.is_empty()) {
                (Some(a), Some(b), Some(n), true) => {
                    let (a, b) = (read(&mut c, "sweep.start", a), read(&mut c, "sweep.stop", b));
                    if c.count("sweep.points", n, 2) >= 2 {
                        if x.spacing == Spacing::Log && !(a > 0.0 && b > 0.0) {
                            c.push("sweep.start", "log spacing needs positive endpoints");
                        }
                        values = (0..n)
                            .map(|k| {
                                let u = k as f64 / (n - 1) as f64;
                                match x.spacing {
                                    Spacing::Linear => a + (b - a) * u,
                                    Spacing::Log => a * (b / a).powf(u),
                                }
                            })
                            .collect();
                    }
                }
                (None, None, None, false) => {}
                _ => c.push("sweep", "give either values = [...] or start, stop and points"),
            }
            let protocol = x.parameter.protocol();
            if !self.protocols.is_empty() && !self.protocols.contains(&protocol) {
                c.push(
                    "sweep.parameter",
                    format!(
                        "{} sweeps run with the {} protocol, which is not listed",
                        x.parameter.name(),
                        protocol.name()
                    ),
                );
            }
            SweepSpec { parameter: x.parameter, values }
        });

        // required sections per protocol
        for p in &self.protocols {
            let (missing, section) = match p {
                Protocol::Analyze => (false, ""),
                Protocol::Evolve => (self.evolve.is_none(), "[evolve]"),
                Protocol::ErrorBudget => (self.errors.is_none(), "[errors]"),
                Protocol::Gates => (self.gates.is_none(), "[gates]"),
                Protocol::Sense => (self.sense.is_none(), "[sense]"),
                Protocol::Compare => (self.compare.is_none() || self.noise.is_none(), "[compare] and [noise]"),
            };
            if missing {
                c.push("protocols", format!("{} needs {section}", p.name()));
            }
        }
        if self.protocols.contains(&Protocol::ErrorBudget) && hyperfine {
            c.push("protocols", "error-budget applies to the optical D3/2 construction");
        }

        if !c.errors.is_empty() {
            return Err(ScenarioError::Invalid(c.errors));
        }
        Ok(Scenario {
            name: self.name.clone(),
            description: self.description.clone(),
            seed: self.seed,
            protocols: self.protocols.clone(),
            scheme,
            construction,
            noise,
            evolve,
            errors,
            gates,
            sense,
            compare,
            sweep,
            output_dir: self.output.as_ref().and_then(|o| o.dir.clone()),
        })
    }
}

impl Scenario {
    /// sha256 of the canonical JSON of the normalized scenario.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
pub fn parse(text: &str) -> Result<(RawScenario, Scenario), ScenarioError> {
    let raw = RawScenario::from_toml(text)?;
    let sc = raw.validate()?;
    Ok((raw, sc))
}
