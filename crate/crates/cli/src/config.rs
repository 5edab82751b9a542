//! Run configuration: a TOML file with the sections `[domain]`,
//! `[coefficients]`, `[psi]`, `[solver]` and `[output]`.

use std::path::{Path, PathBuf};

use lichnerowicz::coefficients::{ExponentialParams, LocalBumpParams};
use lichnerowicz::continuation::geometric_schedule;
use lichnerowicz::DomainSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    AdmissibilityOnly,
    Solve,
    LowRegularitySolve,
    VerifyOnly,
    HarnackBench,
}

/// A per-node table: one value everywhere, or a `node,value` CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Table {
    Constant(f64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableParams {
    pub a: Table,
    pub b: Table,
    pub v: Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Coefficients {
    RnExponential(ExponentialParams),
    LocalBump(LocalBumpParams),
    CustomTable(TableParams),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiConfig {
    /// Decay power of `ψ = (1 + r²)^{-p}`; `rn-exponential` only.
    pub power: Option<f64>,
    /// Replaces the family's `ψ`. Required for `custom-table`.
    pub table: Option<Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode: Mode,
    pub seed: u64,
    pub eps0: f64,
    pub eps_steps: usize,
    pub eps_ratio: f64,
    /// Explicit ε values; overrides `eps0`, `eps_steps` and `eps_ratio`.
    pub schedule: Option<Vec<f64>>,
    pub path_nodes: usize,
    pub max_refinements: usize,
    pub max_sweeps: usize,
    pub grad_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub warm_start: bool,
    pub verify: bool,
    pub verify_bumps: usize,
    pub harnack_q: f64,
    pub harnack_family: usize,
    /// Run the domain-extension test for divergent singular mass.
    pub nonexistence_check: bool,
    /// Members of the truncated coefficient sequence.
    pub n_max: usize,
    /// Radius step of the support truncation; unbounded when absent.
    pub unit: Option<f64>,
    /// Field dump checked in `verify-only` mode.
    pub field: Option<PathBuf>,
    /// ε the dumped field solves; the last ε of the schedule when absent.
    pub verify_eps: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Solve,
            seed: 0,
            eps0: 1.0,
            eps_steps: 12,
            eps_ratio: 4.0,
            schedule: None,
            path_nodes: 33,
            max_refinements: 5,
            max_sweeps: 2000,
            grad_tol: 1e-8,
            newton_tol: 1e-8,
            newton_max_iter: 200,
            warm_start: true,
            verify: true,
            verify_bumps: 50,
            harnack_q: 0.5,
            harnack_family: 8,
            nonexistence_check: true,
            n_max: 8,
            unit: None,
            field: None,
            verify_eps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldFormat {
    Binary,
    Csv,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub fields: FieldFormat,
    /// Dump the iterate of every ε, not only the last.
    pub iterates: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            fields: FieldFormat::Both,
            iterates: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub coefficients: Coefficients,
    #[serde(default)]
    pub psi: PsiConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative table paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub eps0: Option<f64>,
    pub eps_steps: Option<usize>,
    pub field: Option<PathBuf>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        let s = &mut self.solver;
        if let Some(m) = o.mode {
            s.mode = m;
        }
        if let Some(seed) = o.seed {
            s.seed = seed;
        }
        if o.eps0.is_some() || o.eps_steps.is_some() {
            s.schedule = None;
        }
        if let Some(e) = o.eps0 {
            s.eps0 = e;
        }
        if let Some(k) = o.eps_steps {
            s.eps_steps = k;
        }
        if let Some(f) = &o.field {
            // command-line paths are relative to the working directory
            s.field = Some(std::path::absolute(f).unwrap_or_else(|_| f.clone()));
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    pub fn schedule(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.solver;
        match &s.schedule {
            Some(v) => Ok(v.clone()),
            None => geometric_schedule(s.eps0, s.eps_ratio, s.eps_steps)
                .map_err(|e| CliError::Validation(e.to_string())),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks the invariants the file format cannot express. Solver
    /// settings are not looked at in `admissibility-only` mode.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        match (&self.coefficients, &self.psi) {
            (Coefficients::RnExponential(_), _) => {}
            (_, PsiConfig { power: Some(_), .. }) => {
                return bad("[psi] power applies to the rn-exponential family only".into())
            }
            (Coefficients::CustomTable(_), PsiConfig { table: None, .. }) => {
                return bad("custom-table needs [psi] table".into())
            }
            _ => {}
        }
        let s = &self.solver;
        if s.mode == Mode::AdmissibilityOnly {
            return Ok(());
        }
        let schedule = self.schedule()?;
        if schedule.is_empty()
            || schedule.iter().any(|e| !(*e > 0.0 && e.is_finite()))
            || schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad(format!(
                "ε schedule must be positive and strictly decreasing: {schedule:?}"
            ));
        }
        for (name, value) in [
            ("grad_tol", s.grad_tol),
            ("newton_tol", s.newton_tol),
            ("harnack_q", s.harnack_q),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        if s.path_nodes < 3 {
            return bad(format!(
                "path_nodes must be at least 3, got {}",
                s.path_nodes
            ));
        }
        if s.unit.is_some_and(|u| !(u > 0.0)) {
            return bad("unit must be positive".into());
        }
        if s.verify_eps.is_some_and(|e| !(e >= 0.0)) {
            return bad("verify_eps must be nonnegative".into());
        }
        match s.mode {
            Mode::LowRegularitySolve if s.n_max == 0 => bad("n_max must be at least 1".into()),
            Mode::VerifyOnly if s.field.is_none() => {
                bad("verify-only needs [solver] field or --field".into())
            }
            Mode::HarnackBench if s.harnack_family == 0 => {
                bad("harnack_family must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

/// 1-based line of byte offset `at`.
fn line_of(text: &str, at: usize) -> usize {
    text[..at.min(text.len())].matches('\n').count() + 1
}

/// Line of the key named in an `unknown field` message, searched from
/// `from` (the table header toml reports for tagged sections) to the next
/// header.
fn unknown_key_line(text: &str, message: &str, from: usize) -> Option<usize> {
    let key = message.split("unknown field `").nth(1)?.split('`').next()?;
    text.lines()
        .enumerate()
        .skip(from - 1)
        .take_while(|(i, l)| *i + 1 == from || !l.trim_start().starts_with('['))
        .find(|(_, l)| {
            l.split('=')
                .next()
                .is_some_and(|k| k.trim().trim_matches('"') == key)
        })
        .map(|(i, _)| i + 1)
}

pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let line = e.span().map(|s| line_of(text, s.start));
        let line = line.map(|l| unknown_key_line(text, &message, l).unwrap_or(l));
        CliError::Parse { line, message }
    })?;
    cfg.base_dir = base_dir.to_path_buf();
    Ok(cfg)
}

/// Reads and parses the file; validation is left to the caller so
/// overrides can be applied first.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base)
}
