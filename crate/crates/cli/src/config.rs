//! Configuration file schema, flag overrides and resolution into solver
//! inputs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sqra::mesh::{staggered_unit_square, Mesh, Triangulation};
use sqra::physics::{InitialDensity, ProblemSpec, ScalarField};
use sqra::presets::{equilibrium_rates, MeshSource, Preset, Start};
use sqra::solver::{NewtonConfig, Phase, Schedule};

use crate::error::CliError;

/// Environment variable overriding the output directory of the config file.
pub const OUT_DIR_ENV: &str = "SQRA_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "sqra-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state: Option<SteadySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshConfig {
    #[serde(rename = "uniform-1d")]
    Uniform1d {
        cells: usize,
        #[serde(default = "unit_interval")]
        interval: [f64; 2],
    },
    /// Staggered lattice triangulation of the unit square with `nx` columns.
    Lattice {
        nx: usize,
    },
    File {
        path: PathBuf,
    },
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScheduleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<PhaseConfig>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub tau: f64,
    pub until: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct NewtonSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_halving: Option<bool>,
}

/// Scalar field written inline: `{ constant = c }`, `{ affine = [c0, cx, cy] }`
/// for `c0 + cx x + cy y`, or `{ named = "..." }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldDef {
    Constant(f64),
    Affine([f64; 3]),
    Named(String),
}

/// Initial density: any [`FieldDef`], a 1D step or the thermal equilibrium
/// at the given level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityDef {
    Constant(f64),
    Affine([f64; 3]),
    Named(String),
    Step { jump: f64, left: f64, right: f64 },
    Equilibrium(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rates {
    /// `α = 1 + e^{-(φ-1/2)/ε}`, `β = e^{-(φ-1/2)/ε}`.
    Equilibrium,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ProblemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<FieldDef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<FieldDef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<FieldDef>,
    /// Replaces `alpha` and `beta` by rates admitting a thermal equilibrium.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Rates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<DensityDef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunSection {
    /// Times at which cell values are written to `snapshots.csv`.
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConvergenceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_cells: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Equilibrium,
    FinalState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SteadySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub epsilon: Vec<f64>,
    pub tau: Option<f64>,
    pub final_time: Option<f64>,
    pub cells: Vec<usize>,
    pub mesh: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Convergence,
    SteadyState,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Applies the flag overrides. The output directory follows
    /// `--out`, then the environment variable, then the file.
    pub fn apply(&mut self, o: &Overrides, env_out: Option<PathBuf>, command: Command) -> Result<(), CliError> {
        if let Some(p) = &o.preset {
            self.preset = Some(p.clone());
        }
        match (command, o.epsilon.as_slice()) {
            (_, []) => {}
            (Command::Convergence, eps) => {
                self.convergence.get_or_insert_with(Default::default).epsilons = Some(eps.to_vec());
            }
            (_, [eps]) => self.epsilon = Some(*eps),
            _ => return Err(CliError::Usage("--epsilon takes a single value for this command".into())),
        }
        match (command, o.cells.as_slice()) {
            (_, []) => {}
            (Command::Convergence, cells) => {
                self.convergence.get_or_insert_with(Default::default).cells = Some(cells.to_vec());
            }
            (_, [n]) => self.mesh = Some(MeshConfig::Uniform1d { cells: *n, interval: unit_interval() }),
            _ => return Err(CliError::Usage("--cells takes a single value for this command".into())),
        }
        if let Some(path) = &o.mesh {
            if !o.cells.is_empty() && command != Command::Convergence {
                return Err(CliError::Usage("--mesh and --cells are mutually exclusive".into()));
            }
            self.mesh = Some(MeshConfig::File { path: path.clone() });
        }
        if o.tau.is_some() || o.final_time.is_some() {
            let schedule = self.schedule.get_or_insert_with(Default::default);
            if let Some(tau) = o.tau {
                schedule.tau = Some(tau);
                schedule.phases = None;
            }
            if let Some(t) = o.final_time {
                schedule.final_time = Some(t);
            }
        }
        if let Some(out) = o.out.clone().or(env_out) {
            self.out_dir = Some(out);
        }
        Ok(())
    }

    fn preset(&self) -> Result<Option<Preset>, CliError> {
        self.preset.as_deref().map(|p| p.parse::<Preset>().map_err(CliError::Usage)).transpose()
    }

    /// Fills every default so that the result describes the run completely.
    pub fn resolve(&self, command: Command) -> Result<Config, CliError> {
        let preset = self.preset()?;
        let mut out = self.clone();
        out.epsilon = Some(match (self.epsilon, preset) {
            (Some(e), _) => e,
            (None, Some(p)) => p.default_epsilon(),
            (None, None) => return Err(CliError::Usage("epsilon is required without a preset".into())),
        });
        out.mesh = Some(match (&self.mesh, preset) {
            (Some(m), _) => m.clone(),
            (None, Some(p)) => match p.default_mesh() {
                MeshSource::Uniform1d { cells } => MeshConfig::Uniform1d { cells, interval: unit_interval() },
                MeshSource::Lattice { nx } => MeshConfig::Lattice { nx },
            },
            (None, None) if command == Command::Convergence => {
                MeshConfig::Uniform1d { cells: 100, interval: unit_interval() }
            }
            (None, None) => return Err(CliError::Usage("a mesh is required without a preset".into())),
        });
        out.schedule = Some(ScheduleConfig { tau: None, final_time: None, phases: Some(self.phases(preset)?) });
        let defaults = NewtonConfig::default();
        let n = self.newton.clone().unwrap_or_default();
        out.newton = Some(NewtonSection {
            rel_tol: Some(n.rel_tol.unwrap_or(defaults.rel_tol)),
            max_iters: Some(n.max_iters.unwrap_or(defaults.max_iters)),
            clip: Some(n.clip.unwrap_or(defaults.clip)),
            step_halving: Some(n.step_halving.unwrap_or(defaults.step_halving)),
        });
        if preset.is_none() {
            let p = self.problem.clone().unwrap_or_default();
            let rates = p.rates.is_some() || (p.alpha.is_some() && p.beta.is_some());
            if p.phi.is_none() || p.rho0.is_none() || !rates {
                return Err(CliError::Usage(
                    "without a preset, [problem] must define phi, rho0 and either alpha and beta or rates".into(),
                ));
            }
        }
        match command {
            Command::Run => {
                out.run.get_or_insert_with(Default::default);
            }
            Command::Convergence => {
                let c = out.convergence.get_or_insert_with(Default::default);
                c.epsilons.get_or_insert_with(|| vec![out.epsilon.unwrap()]);
                c.cells.get_or_insert_with(|| vec![100, 200, 400, 800]);
                c.reference_cells.get_or_insert(6400);
            }
            Command::SteadyState => {
                let phase_end = out.schedule.as_ref().unwrap().phases.as_ref().unwrap()[0].until;
                let equilibrium = self.equilibrium_level(preset);
                let s = out.steady_state.get_or_insert_with(Default::default);
                s.target.get_or_insert(if equilibrium.is_some() {
                    TargetKind::Equilibrium
                } else {
                    TargetKind::FinalState
                });
                if s.target == Some(TargetKind::Equilibrium) {
                    let level = s.level.or(equilibrium).ok_or_else(|| {
                        CliError::Usage("target = \"equilibrium\" needs a level or equilibrium rates".into())
                    })?;
                    s.level = Some(level);
                }
                s.window.get_or_insert([1.0f64.min(phase_end), phase_end]);
            }
        }
        out.validate(command)?;
        Ok(out)
    }

    fn equilibrium_level(&self, preset: Option<Preset>) -> Option<f64> {
        let p = self.problem.clone().unwrap_or_default();
        if p.rates == Some(Rates::Equilibrium) {
            return Some(sqra::presets::EQUILIBRIUM_LEVEL);
        }
        if p.alpha.is_some() || p.beta.is_some() {
            return None;
        }
        preset.and_then(Preset::equilibrium_level)
    }

    fn phases(&self, preset: Option<Preset>) -> Result<Vec<PhaseConfig>, CliError> {
        let s = self.schedule.clone().unwrap_or_default();
        let base: Vec<PhaseConfig> = match (&s.phases, s.tau, preset) {
            (Some(_), Some(_), _) => {
                return Err(CliError::Usage("[schedule] takes either phases or tau, not both".into()));
            }
            (Some(p), None, _) => p.clone(),
            (None, Some(tau), _) => {
                let until = s
                    .final_time
                    .or_else(|| preset.map(|p| p.default_schedule().final_time()))
                    .ok_or_else(|| CliError::Usage("[schedule] needs final-time".into()))?;
                vec![PhaseConfig { tau, until }]
            }
            (None, None, Some(p)) => {
                p.default_schedule().phases.iter().map(|ph| PhaseConfig { tau: ph.tau, until: ph.until }).collect()
            }
            (None, None, None) => return Err(CliError::Usage("a time schedule is required without a preset".into())),
        };
        Ok(match s.final_time {
            Some(t) => truncate(&base, t),
            None => base,
        })
    }

    fn validate(&self, command: Command) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Usage(what.to_string()));
        let eps = self.epsilon.unwrap();
        if !(eps > 0.0 && eps.is_finite()) {
            return bad("epsilon must be positive");
        }
        match self.mesh.as_ref().unwrap() {
            MeshConfig::Uniform1d { cells, interval } => {
                if *cells == 0 || !(interval[1] > interval[0]) {
                    return bad("uniform-1d mesh needs cells > 0 and a nonempty interval");
                }
            }
            MeshConfig::Lattice { nx } if *nx < 2 => return bad("lattice mesh needs nx >= 2"),
            MeshConfig::File { path } if !path.exists() => {
                return Err(CliError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            _ => {}
        }
        self.problem(eps)?.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.schedule().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.newton().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if command == Command::Convergence {
            let c = self.convergence.as_ref().unwrap();
            if c.epsilons.as_ref().unwrap().iter().any(|e| !(*e > 0.0)) {
                return bad("convergence epsilons must be positive");
            }
            if !matches!(self.mesh, Some(MeshConfig::Uniform1d { .. })) {
                return bad("convergence studies run on uniform 1D grids");
            }
        }
        if let Some(s) = &self.run {
            if s.snapshots.iter().any(|t| !(*t >= 0.0)) {
                return bad("snapshot times must be nonnegative");
            }
        }
        Ok(())
    }

    /// Output directory; only meaningful after [`Config::apply`].
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// SHA-256 of the resolved configuration without its output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn schedule(&self) -> Schedule {
        let phases = self.schedule.as_ref().and_then(|s| s.phases.clone()).unwrap_or_default();
        Schedule { phases: phases.iter().map(|p| Phase { tau: p.tau, until: p.until }).collect() }
    }

    pub fn newton(&self) -> NewtonConfig {
        let n = self.newton.clone().unwrap_or_default();
        let d = NewtonConfig::default();
        NewtonConfig {
            rel_tol: n.rel_tol.unwrap_or(d.rel_tol),
            max_iters: n.max_iters.unwrap_or(d.max_iters),
            clip: n.clip.unwrap_or(d.clip),
            step_halving: n.step_halving.unwrap_or(d.step_halving),
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh, CliError> {
        match self.mesh.as_ref().expect("resolved") {
            MeshConfig::Uniform1d { cells, interval } => Ok(Mesh::uniform_1d(*cells, *interval)?),
            MeshConfig::Lattice { nx } => Ok(Mesh::from_triangulation(&staggered_unit_square(*nx))?),
            MeshConfig::File { path } => {
                let tri = Triangulation::read(path).map_err(|e| CliError::mesh_input(path, e))?;
                Ok(Mesh::from_triangulation(&tri)?)
            }
        }
    }

    /// Problem data at inverse Péclet number `eps`.
    pub fn problem(&self, eps: f64) -> Result<ProblemSpec, CliError> {
        let p = self.problem.clone().unwrap_or_default();
        let mut spec = match self.preset()? {
            Some(preset) => preset.problem(eps, Start::Default),
            None => ProblemSpec {
                phi: ScalarField::constant(0.0),
                alpha: ScalarField::constant(1.0),
                beta: ScalarField::constant(0.5),
                rho0: InitialDensity::Field(ScalarField::constant(0.5)),
                epsilon: eps,
            },
        };
        if let Some(f) = &p.phi {
            spec.phi = field(f)?;
        }
        if let Some(f) = &p.alpha {
            spec.alpha = field(f)?;
        }
        if let Some(f) = &p.beta {
            spec.beta = field(f)?;
        }
        if p.rates == Some(Rates::Equilibrium) {
            let (a, b) = equilibrium_rates(&spec.phi, eps);
            spec.alpha = a;
            spec.beta = b;
        }
        if let Some(d) = &p.rho0 {
            spec.rho0 = density(d)?;
        }
        Ok(spec)
    }
}

/// Phases cut at time `t`; the last phase is extended or shortened to end there.
fn truncate(phases: &[PhaseConfig], t: f64) -> Vec<PhaseConfig> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for p in phases {
        if start >= t && !out.is_empty() {
            break;
        }
        out.push(PhaseConfig { tau: p.tau, until: p.until.min(t) });
        start = p.until;
    }
    if let Some(last) = out.last_mut() {
        last.until = t;
    }
    out
}

const NAMED_FIELDS: [&str; 3] = ["quarter-box", "left-half", "noneq-beta"];

fn named(name: &str) -> Result<ScalarField, CliError> {
    Ok(match name {
        "quarter-box" => ScalarField::new(|x| if x[0] < 0.5 && x[1] < 0.5 { 1.0 } else { 0.0 }),
        "left-half" => ScalarField::new(|x| if x[0] < 0.5 { 1.0 } else { 0.0 }),
        "noneq-beta" => {
            ScalarField::new(|x| 0.1 + 0.8 * ((1.5 * PI * x[1]).cos().powi(2) + (2.0 * x[1] - 1.0) * (PI * x[0]).sin()))
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown named field `{other}` (expected one of {})",
                NAMED_FIELDS.join(", ")
            )))
        }
    })
}

fn field(f: &FieldDef) -> Result<ScalarField, CliError> {
    match f {
        FieldDef::Constant(c) => Ok(ScalarField::constant(*c)),
        FieldDef::Affine([c0, cx, cy]) => Ok(ScalarField::affine(*c0, *cx, *cy)),
        FieldDef::Named(n) => named(n),
    }
}

fn density(d: &DensityDef) -> Result<InitialDensity, CliError> {
    Ok(match d {
        DensityDef::Constant(c) => InitialDensity::Field(field(&FieldDef::Constant(*c))?),
        DensityDef::Affine(c) => InitialDensity::Field(field(&FieldDef::Affine(*c))?),
        DensityDef::Named(n) => InitialDensity::Field(named(n)?),
        DensityDef::Step { jump, left, right } => InitialDensity::Step1d { jump: *jump, left: *left, right: *right },
        DensityDef::Equilibrium(level) => InitialDensity::Equilibrium { level: *level },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Config {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn preset_defaults_fill_everything() {
        let c = parse("preset = \"noneq-2d\"").resolve(Command::SteadyState).unwrap();
        assert_eq!(c.epsilon, Some(0.01));
        assert_eq!(c.mesh, Some(MeshConfig::Lattice { nx: 22 }));
        assert_eq!(c.schedule().times().len(), 2098);
        let s = c.steady_state.unwrap();
        assert_eq!(s.target, Some(TargetKind::FinalState));
        assert_eq!(s.window, Some([1.0, 200.0]));
    }

    #[test]
    fn equilibrium_target_for_equilibrium_rates() {
        let c = parse("preset = \"eq-2d\"").resolve(Command::SteadyState).unwrap();
        let s = c.steady_state.unwrap();
        assert_eq!((s.target, s.level), (Some(TargetKind::Equilibrium), Some(0.5)));
        let c = parse("preset = \"eq-2d\"\n[problem]\nbeta = { constant = 0.3 }\nalpha = { constant = 1.0 }")
            .resolve(Command::SteadyState)
            .unwrap();
        assert_eq!(c.steady_state.unwrap().target, Some(TargetKind::FinalState));
    }

    #[test]
    fn flags_override_file_values() {
        let mut c = parse("preset = \"conv-1d\"\nepsilon = 0.5\nout-dir = \"from-file\"");
        let o = Overrides {
            epsilon: vec![0.2],
            tau: Some(0.05),
            final_time: Some(1.0),
            cells: vec![40],
            ..Default::default()
        };
        c.apply(&o, Some(PathBuf::from("from-env")), Command::Run).unwrap();
        let r = c.resolve(Command::Run).unwrap();
        assert_eq!(r.epsilon, Some(0.2));
        assert_eq!(r.schedule().times().len(), 20);
        assert_eq!(r.mesh, Some(MeshConfig::Uniform1d { cells: 40, interval: [0.0, 1.0] }));
        assert_eq!(r.out_dir(), PathBuf::from("from-env"));

        let mut c = parse("preset = \"conv-1d\"\nout-dir = \"from-file\"");
        c.apply(&Overrides { out: Some("flag".into()), ..Default::default() }, Some("env".into()), Command::Run)
            .unwrap();
        assert_eq!(c.out_dir(), PathBuf::from("flag"));
        let mut c = parse("preset = \"conv-1d\"\nout-dir = \"from-file\"");
        c.apply(&Overrides::default(), None, Command::Run).unwrap();
        assert_eq!(c.out_dir(), PathBuf::from("from-file"));
        assert_eq!(Config::default().out_dir(), PathBuf::from(DEFAULT_OUT_DIR));
    }

    #[test]
    fn final_time_truncates_phases() {
        let phases = [PhaseConfig { tau: 0.1, until: 200.0 }, PhaseConfig { tau: 100.0, until: 1e4 }];
        assert_eq!(truncate(&phases, 50.0), vec![PhaseConfig { tau: 0.1, until: 50.0 }]);
        assert_eq!(truncate(&phases, 500.0), vec![phases[0], PhaseConfig { tau: 100.0, until: 500.0 }]);
        assert_eq!(truncate(&phases, 0.0), vec![PhaseConfig { tau: 0.1, until: 0.0 }]);
    }

    #[test]
    fn hash_ignores_output_directory_and_is_stable() {
        let a = parse("preset = \"conv-1d\"\nout-dir = \"a\"").resolve(Command::Run).unwrap();
        let b = parse("preset = \"conv-1d\"\nout-dir = \"b\"").resolve(Command::Run).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let again: Config = toml::from_str(&a.to_toml()).unwrap();
        assert_eq!(again.resolve(Command::Run).unwrap().hash(), a.hash());
        let c = parse("preset = \"conv-1d\"\nepsilon = 0.3").resolve(Command::Run).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn inline_problem_definitions() {
        let c = parse(
            r#"
            epsilon = 0.2
            [mesh]
            kind = "uniform-1d"
            cells = 10
            [schedule]
            tau = 0.1
            final-time = 1.0
            [problem]
            phi = { affine = [1.0, -1.0, 0.0] }
            rates = "equilibrium"
            rho0 = { step = { jump = 0.5, left = 0.9, right = 0.1 } }
            "#,
        )
        .resolve(Command::Run)
        .unwrap();
        let spec = c.problem(0.2).unwrap();
        assert!((spec.beta.eval([0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert!((spec.alpha.eval([0.5, 0.0]) - 2.0).abs() < 1e-15);
        assert!(matches!(spec.rho0, InitialDensity::Step1d { .. }));
    }

    #[test]
    fn rejects_bad_configs() {
        let usage = |text: &str, cmd| matches!(parse(text).resolve(cmd), Err(CliError::Usage(_)));
        assert!(usage("preset = \"nope\"", Command::Run));
        assert!(usage("preset = \"conv-1d\"\nepsilon = -1.0", Command::Run));
        assert!(usage("epsilon = 1.0", Command::Run));
        assert!(usage("preset = \"conv-1d\"\n[schedule]\ntau = -0.1", Command::Run));
        assert!(usage("preset = \"eq-2d\"", Command::Convergence));
        assert!(usage("preset = \"conv-1d\"\n[problem]\nphi = { named = \"nope\" }", Command::Run));
        assert!(toml::from_str::<Config>("unknown = 1").is_err());
    }
}
