//! Report files, plot-ready CSVs and field dumps. Every file is written
//! as soon as its content is known, so a failing run leaves what it had.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lichnerowicz::continuation::{LowRegularityTrace, SolveTrace};
use lichnerowicz::io::{write_field, write_field_csv};
use lichnerowicz::Field;
use serde::Serialize;
use serde_json::Value;

use crate::config::FieldFormat;
use crate::CliError;

pub const ADMISSIBILITY: &str = "admissibility.report";
pub const TRACE: &str = "trace.record";
pub const VERIFICATION: &str = "verification.report";
pub const HARNACK: &str = "harnack.report";
pub const ERROR: &str = "error.report";
pub const CONVERGENCE: &str = "convergence.csv";
pub const MOUNTAIN_PASS: &str = "mountain_pass.csv";
pub const LOW_REGULARITY: &str = "low_regularity.csv";

pub struct Artifacts {
    dir: PathBuf,
    format: FieldFormat,
}

impl Artifacts {
    pub fn create(dir: &Path, format: FieldFormat) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        log::debug!("wrote {}", path.display());
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        self.write_with(name, |w| {
            w.write_all(text.as_bytes())
                .map_err(|e| CliError::io(&path, e))
        })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }

    /// `<stem>.field` and/or `<stem>.csv`.
    pub fn field(&self, stem: &str, u: &Field) -> Result<(), CliError> {
        if self.format != FieldFormat::Csv {
            self.write_with(&format!("{stem}.field"), |w| Ok(write_field(w, u)?))?;
        }
        if self.format != FieldFormat::Binary {
            self.write_with(&format!("{stem}.csv"), |w| Ok(write_field_csv(w, u)?))?;
        }
        Ok(())
    }
}

/// `eps,m_eps,norm,singular_mass,min_u`, one row per ε reached.
pub fn convergence_csv(t: &SolveTrace) -> String {
    let mut s = String::from("eps,m_eps,norm,singular_mass,min_u\n");
    for (k, step) in t.per_eps.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            step.critical.eps, t.levels[k], t.norms[k], t.singular_masses[k], t.min_u[k]
        );
    }
    s
}

/// Every deformation sweep of every ε.
pub fn mountain_pass_csv(t: &SolveTrace) -> String {
    let mut s = String::from("eps,sweep,max_energy,peak_grad_norm\n");
    for step in &t.per_eps {
        for r in &step.history {
            let _ = writeln!(
                s,
                "{:.17e},{},{:.17e},{:.17e}",
                step.critical.eps, r.sweep, r.max_energy, r.peak_grad_norm
            );
        }
    }
    s
}

/// `n,norm_sq,scaled_norm,sequence_bound,bounded,increment`; the increment
/// of member `n` is measured from member `n - 1`.
pub fn low_regularity_csv(t: &LowRegularityTrace, dimension: usize) -> String {
    let mut s = String::from("n,norm_sq,scaled_norm,sequence_bound,bounded,increment\n");
    for (k, m) in t.members.iter().enumerate() {
        let scaled = t.scaled_norms[k];
        let inc = if k == 0 {
            String::new()
        } else {
            t.increments
                .get(k - 1)
                .map(|x| format!("{x:.17e}"))
                .unwrap_or_default()
        };
        let _ = writeln!(
            s,
            "{},{:.17e},{:.17e},{:.17e},{},{}",
            m.approx_index.unwrap_or(k + 1),
            scaled * dimension as f64,
            scaled,
            t.sequence_bound,
            t.bounded[k],
            inc
        );
    }
    s
}

fn number(v: &Value, pointer: &str) -> String {
    match v.pointer(pointer) {
        Some(Value::Number(n)) => n
            .as_f64()
            .map(|x| format!("{x:.10e}"))
            .unwrap_or_else(|| n.to_string()),
        Some(Value::Null) | None => "-".into(),
        Some(other) => other.to_string(),
    }
}

/// Human-readable summary of a run directory.
pub fn render_report(dir: &Path) -> Result<String, CliError> {
    let read = |name: &str| -> Result<Option<Value>, CliError> {
        let path = dir.join(name);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(&path, e)),
        }
    };
    let mut s = String::new();
    let Some(adm) = read(ADMISSIBILITY)? else {
        return Err(CliError::io(
            &dir.join(ADMISSIBILITY),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no admissibility report"),
        ));
    };
    let _ = writeln!(s, "Admissibility constants");
    let rows = [
        ("S", "Sobolev constant", "/report/S"),
        ("b₊", "sup B₊ on supp ψ", "/report/b_plus"),
        ("b₋", "sup B₋ on supp ψ", "/report/b_minus"),
        ("2*", "critical exponent", "/report/two_star"),
        ("t₀", "barrier radius", "/report/t0"),
        ("Φ(t₀)", "barrier level", "/report/phi_t0"),
        ("K", "", "/report/K"),
        ("Θ", "", "/report/Theta"),
        ("t₁", "start of the path", "/report/t1"),
        ("t₂", "end of the path", "/report/t2"),
        ("∫A/|ψ|^{2*}", "singular mass of ψ", "/report/singular_mass"),
        ("K_H", "Hebey comparison constant", "/report/hebey_K"),
        ("ThetaK", "left side at (K, Θ)", "/report/theta_k_lhs"),
    ];
    for (symbol, meaning, pointer) in rows {
        let _ = writeln!(s, "  {symbol:<12} {:>18}  {meaning}", number(&adm, pointer));
    }
    let _ = writeln!(s, "Verdicts");
    if let Some(Value::Object(map)) = adm.pointer("/report/verdicts") {
        for (k, v) in map {
            let _ = writeln!(s, "  {k:<18} {v}");
        }
    }
    let _ = writeln!(
        s,
        "  {:<18} {}",
        "nonexistence",
        adm.pointer("/report/nonexistence_flag")
            .unwrap_or(&Value::Null)
    );
    let _ = writeln!(
        s,
        "  {:<18} {}",
        "feasible",
        adm.pointer("/feasible").unwrap_or(&Value::Null)
    );
    if let Some(trace) = read(TRACE)? {
        let levels = trace.pointer("/trace/levels").and_then(Value::as_array);
        if let Some(levels) = levels {
            let _ = writeln!(s, "Continuation");
            let _ = writeln!(s, "  ε steps reached    {}", levels.len());
            let _ = writeln!(
                s,
                "  final m_ε          {}",
                number(
                    &trace,
                    &format!("/trace/levels/{}", levels.len().saturating_sub(1))
                )
            );
            let _ = writeln!(
                s,
                "  level bound        {}",
                number(&trace, "/trace/level_bound")
            );
            let _ = writeln!(
                s,
                "  failure            {}",
                trace.pointer("/trace/failure").unwrap_or(&Value::Null)
            );
        }
    }
    if let Some(v) = read(VERIFICATION)? {
        let _ = writeln!(s, "Verification");
        if let Some(Value::Object(map)) = v.pointer("/verdicts") {
            for (k, v) in map {
                let _ = writeln!(s, "  {k:<26} {v}");
            }
        }
    }
    Ok(s)
}
