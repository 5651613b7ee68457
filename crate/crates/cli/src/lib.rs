//! `clm`: measures, forward moments, certificates, identity and oracle
//! checks, cokernel simulation and finite-set inversion from the command
//! line. Payloads go to stdout, diagnostics to stderr.
//!
//! Exit codes: 0 success, 1 negative verdict, 2 usage or input error,
//! 3 internal invariant violation.

use std::ffi::OsString;
use std::fs;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clm_core::abelianp::{AbelianError, Level, Partition};
use clm_core::momentcalc::{
    existence_verdict, inversion_identity_check, measure_card_power, measure_from_moments, moments_from_measure,
    wellbehaved_certify, MeasureTable, MomentError, MomentFile, MomentSpec, Verdict,
};
use clm_core::oracle::{run_oracle, OracleOptions};
use clm_core::sampler::{run_simulation, Mode, SimConfig, SimError};
use clm_core::setcat::{self, SetError, SETCAT_SCHEMA};
use serde::Serialize;
use serde_json::{json, Value};

pub const FORWARD_SCHEMA: &str = "clm.forward.v1";
pub const CERTIFY_SCHEMA: &str = "clm.certify.v1";
pub const THREADS_ENV: &str = "CLM_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub exit_code: i32,
    /// Goes to stdout.
    pub payload: Option<String>,
    /// Goes to stderr.
    pub diagnostics: Vec<String>,
}

#[derive(Parser, Debug)]
#[command(name = "clm", version, about = "Categorical moment problems for finite abelian p-groups and finite sets")]
struct Cli {
    /// Worker thread cap (falls back to CLM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct LevelArgs {
    #[arg(long)]
    p: u64,
    #[arg(long)]
    k: u32,
}

impl LevelArgs {
    fn level(&self) -> Result<Level, Failure> {
        Level::new(self.p, self.k).map_err(|e| Failure::Input(e.to_string()))
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure v_F on the window |F| <= max-size.
    Measure {
        #[command(flatten)]
        level: LevelArgs,
        /// card:u=U | sym2 | point:λ | file:PATH
        #[arg(long)]
        moments: String,
        #[arg(long)]
        max_size: u32,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Use the product formula (card moments only).
        #[arg(long)]
        closed_form: bool,
    },
    /// Moments of a measure table at the given targets.
    Forward {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        measure_file: String,
        /// Partitions, as separate arguments or `;`-separated.
        #[arg(long, num_args = 1.., required = true, allow_hyphen_values = true)]
        targets: Vec<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Well-behavedness test at one target.
    Certify {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        moments: String,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 3, value_parser = parse_a)]
        a: u32,
    },
    /// Exact check of the inversion identity on the window.
    CheckIdentity {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        max_size: u32,
    },
    /// Lattice and counting invariants on explicit groups of the window.
    Oracle {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        max_size: u32,
    },
    /// Cokernels of random matrices over Z/p^k.
    Simulate {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        u: i64,
        /// n × n alternating matrices instead of n × (n+u).
        #[arg(long)]
        skew: bool,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, num_args = 0.., allow_hyphen_values = true)]
        targets: Vec<String>,
    },
    /// Finite sets: factorial moments.
    Setcat {
        #[command(subcommand)]
        op: SetcatOp,
    },
}

#[derive(Subcommand, Debug)]
enum SetcatOp {
    /// Factorial moments to a distribution.
    Invert {
        #[arg(long)]
        file: String,
        #[arg(long)]
        max_index: usize,
        /// Exponent of the 2^{a(n-m)} guard.
        #[arg(long, default_value_t = 1, value_parser = parse_a)]
        a: u32,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// A distribution to factorial moments.
    Forward {
        #[arg(long)]
        file: String,
        #[arg(long)]
        max_index: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

fn parse_a(s: &str) -> Result<u32, String> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        "3" => Ok(3),
        _ => Err(format!("expected 0, 1 or 3, got {s}")),
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl From<AbelianError> for Failure {
    fn from(e: AbelianError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MomentError> for Failure {
    fn from(e: MomentError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SetError> for Failure {
    fn from(e: SetError) -> Self {
        Failure::Input(e.to_string())
    }
}

struct Outcome {
    code: i32,
    payload: String,
    diagnostics: Vec<String>,
}

impl Outcome {
    fn ok(payload: String) -> Self {
        Outcome {
            code: 0,
            payload,
            diagnostics: Vec::new(),
        }
    }
}

fn parse_partition(s: &str) -> Result<Partition, Failure> {
    s.parse().map_err(|e: AbelianError| Failure::Input(format!("partition {s:?}: {e}")))
}

fn parse_targets(raw: &[String]) -> Result<Vec<Partition>, Failure> {
    raw.iter()
        .flat_map(|s| s.split(';'))
        .filter(|s| !s.trim().is_empty())
        .map(parse_partition)
        .collect()
}

fn read(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{path}: {e}")))
}

fn parse_moments(level: Level, s: &str) -> Result<MomentSpec, Failure> {
    let spec = if let Some(rest) = s.strip_prefix("card:") {
        let u = rest
            .strip_prefix("u=")
            .and_then(|u| u.parse::<f64>().ok())
            .filter(|u| u.is_finite())
            .ok_or_else(|| Failure::Input(format!("expected card:u=<number>, got {s:?}")))?;
        MomentSpec::card_power(u)
    } else if s == "sym2" {
        MomentSpec::Sym2
    } else if let Some(rest) = s.strip_prefix("point:") {
        MomentSpec::point_mass(parse_partition(rest)?)
    } else if let Some(path) = s.strip_prefix("file:") {
        let (file_level, spec) = MomentFile::parse(&read(path)?)?;
        if file_level != level {
            return Err(Failure::Input(format!("{path} is for level {file_level}, not {level}")));
        }
        spec
    } else {
        return Err(Failure::Input(format!("unknown moment spec {s:?}")));
    };
    spec.validate(level)?;
    Ok(spec)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// `report` as an object with `schema` and the echoed `inputs`.
fn document(schema: &str, inputs: Value, report: Value) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("schema".into(), Value::String(schema.into()));
    obj.insert("inputs".into(), inputs);
    match report {
        Value::Object(m) => {
            for (k, v) in m {
                if k != "schema" {
                    obj.insert(k, v);
                }
            }
        }
        other => {
            obj.insert("result".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("json");
    s.push('\n');
    s
}

struct CsvRow {
    key: String,
    value: f64,
    err_bound: f64,
    exact: Option<String>,
}

fn csv_table(first: &str, rows: impl IntoIterator<Item = CsvRow>) -> String {
    let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(Vec::new());
    w.write_record([first, "value", "err_bound", "exact"]).expect("in-memory csv");
    for r in rows {
        w.write_record([r.key, format!("{:?}", r.value), format!("{:?}", r.err_bound), r.exact.unwrap_or_default()])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

fn exact_str(v: &Value) -> Option<String> {
    v.as_str().map(str::to_string)
}

fn measure(level: Level, moments: &str, max_size: u32, format: Format, closed_form: bool) -> Result<Outcome, Failure> {
    let spec = parse_moments(level, moments)?;
    let inputs = json!({
        "p": level.p(), "k": level.k(), "moments": moments, "max_size": max_size,
        "format": format, "closed_form": closed_form,
    });
    let table = if closed_form {
        match spec {
            MomentSpec::CardPower { u } => measure_card_power(level, u, max_size)?,
            _ => return Err(Failure::Input("--closed-form needs card:u=U moments".into())),
        }
    } else {
        match measure_from_moments(level, &spec, max_size) {
            Ok(t) => t,
            Err(MomentError::DivergentTail(f)) => {
                let payload = document(
                    clm_core::momentcalc::MEASURE_SCHEMA,
                    inputs,
                    json!({ "error": "divergent_tail", "partition": f }),
                );
                return Ok(Outcome {
                    code: 1,
                    payload,
                    diagnostics: vec![format!("the inversion series for {f} diverges")],
                });
            }
            Err(e) => return Err(e.into()),
        }
    };
    let existence = existence_verdict(&table);
    let mut diagnostics = Vec::new();
    let code = match &existence.witness {
        Some(w) => {
            diagnostics.push(format!("no measure: v_{w} is negative"));
            1
        }
        None => 0,
    };
    let payload = match format {
        Format::Json => {
            let mut report = to_json(&table);
            report["existence"] = to_json(&existence);
            document(&table.schema, inputs, report)
        }
        Format::Csv => csv_table(
            "partition",
            table.entries.iter().map(|e| CsvRow {
                key: e.partition.to_cli(),
                value: e.value,
                err_bound: e.err_bound,
                exact: exact_str(&to_json(e)["exact"]),
            }),
        ),
    };
    Ok(Outcome {
        code,
        payload,
        diagnostics,
    })
}

fn forward(level: Level, path: &str, targets: &[String], format: Format) -> Result<Outcome, Failure> {
    let table = MeasureTable::from_json(&read(path)?)?;
    if table.level != level {
        return Err(Failure::Input(format!("{path} is for level {}, not {level}", table.level)));
    }
    let targets = parse_targets(targets)?;
    let moments = moments_from_measure(level, &table, &targets)?;
    let mut diagnostics = Vec::new();
    if moments.iter().any(|m| !m.rigorous) {
        diagnostics.push("no moment spec in the table: error bounds cover the window only".into());
    }
    let payload = match format {
        Format::Json => document(
            FORWARD_SCHEMA,
            json!({
                "p": level.p(), "k": level.k(), "measure_file": path,
                "targets": targets, "format": format,
            }),
            json!({
                "level": level,
                "window_max_size": table.window_max_size,
                "moments": moments,
            }),
        ),
        Format::Csv => csv_table(
            "partition",
            moments.iter().map(|m| CsvRow {
                key: m.partition.to_cli(),
                value: m.value,
                err_bound: m.err_bound,
                exact: exact_str(&to_json(m)["exact"]),
            }),
        ),
    };
    Ok(Outcome {
        code: 0,
        payload,
        diagnostics,
    })
}

fn certify(level: Level, moments: &str, target: &str, a: u32) -> Result<Outcome, Failure> {
    let spec = parse_moments(level, moments)?;
    let f = parse_partition(target)?;
    let cert = wellbehaved_certify(level, &spec, &f, a)?;
    let code = if cert.verdict == Verdict::Converges { 0 } else { 1 };
    let diagnostics = if code == 1 {
        vec![format!("not certified ({:?}): {}", cert.verdict, cert.reason)]
    } else {
        Vec::new()
    };
    let payload = document(
        CERTIFY_SCHEMA,
        json!({ "p": level.p(), "k": level.k(), "moments": moments, "target": f, "a": a }),
        to_json(&cert),
    );
    Ok(Outcome {
        code,
        payload,
        diagnostics,
    })
}

fn check_identity(level: Level, max_size: u32) -> Result<Outcome, Failure> {
    let report = inversion_identity_check(level, max_size)?;
    let payload = document(
        report.schema,
        json!({ "p": level.p(), "k": level.k(), "max_size": max_size }),
        to_json(&report),
    );
    if report.pass {
        Ok(Outcome::ok(payload))
    } else {
        Ok(Outcome {
            code: 3,
            payload,
            diagnostics: vec![format!("identity defect {}", to_json(&report)["max_defect"])],
        })
    }
}

fn oracle(level: Level, max_size: u32) -> Result<Outcome, Failure> {
    let report = run_oracle(level, max_size, OracleOptions::default())?;
    let payload = document(
        &report.schema,
        json!({ "p": level.p(), "k": level.k(), "max_size": max_size }),
        to_json(&report),
    );
    if report.pass {
        return Ok(Outcome::ok(payload));
    }
    let mut diagnostics: Vec<String> = report.groups.iter().flat_map(|g| g.messages.clone()).collect();
    diagnostics.extend(report.counting.messages.iter().cloned());
    Ok(Outcome {
        code: 3,
        payload,
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    level: Level,
    n: usize,
    u: i64,
    skew: bool,
    samples: u64,
    seed: u64,
    targets: &[String],
) -> Result<Outcome, Failure> {
    let targets = parse_targets(targets)?;
    let config = SimConfig {
        level,
        n,
        u,
        mode: if skew { Mode::Skew } else { Mode::Generic },
        samples,
        seed,
    };
    let report = run_simulation(&config, &targets)?;
    let payload = document(
        &report.schema,
        json!({
            "p": level.p(), "k": level.k(), "n": n, "u": u, "skew": skew,
            "samples": samples, "seed": seed, "targets": targets,
        }),
        to_json(&report),
    );
    Ok(Outcome::ok(payload))
}

fn setcat_entries_csv(entries: &[setcat::SetEntry]) -> String {
    csv_table(
        "index",
        entries.iter().map(|e| CsvRow {
            key: e.index.to_string(),
            value: e.value,
            err_bound: e.err_bound,
            exact: exact_str(&to_json(e)["exact"]),
        }),
    )
}

fn setcat_cmd(op: &SetcatOp) -> Result<Outcome, Failure> {
    match op {
        SetcatOp::Invert {
            file,
            max_index,
            a,
            format,
        } => {
            let seq = setcat::parse_moments(&read(file)?)?;
            let inputs = json!({ "op": "invert", "file": file, "max_index": max_index, "a": a, "format": format });
            let report = match setcat::invert_factorial_moments(&seq, *max_index, *a) {
                Ok(r) => r,
                Err(SetError::GuardFails(why)) => {
                    return Ok(Outcome {
                        code: 1,
                        payload: document(SETCAT_SCHEMA, inputs, json!({ "guard": "fails", "reason": why })),
                        diagnostics: vec![format!("convergence guard fails: {why}")],
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let mut diagnostics = Vec::new();
            let code = match report.witness {
                Some(m) => {
                    diagnostics.push(format!("no distribution: ν_{m} is negative"));
                    1
                }
                None => 0,
            };
            let payload = match format {
                Format::Json => document(SETCAT_SCHEMA, inputs, to_json(&report)),
                Format::Csv => setcat_entries_csv(&report.entries),
            };
            Ok(Outcome {
                code,
                payload,
                diagnostics,
            })
        }
        SetcatOp::Forward {
            file,
            max_index,
            format,
        } => {
            let dist = setcat::parse_distribution(&read(file)?)?;
            let entries = setcat::forward_factorial_moments(&dist, *max_index)?;
            let payload = match format {
                Format::Json => document(
                    SETCAT_SCHEMA,
                    json!({ "op": "forward", "file": file, "max_index": max_index, "format": format }),
                    json!({ "entries": entries }),
                ),
                Format::Csv => setcat_entries_csv(&entries),
            };
            Ok(Outcome::ok(payload))
        }
    }
}

fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Measure {
            level,
            moments,
            max_size,
            format,
            closed_form,
        } => measure(level.level()?, moments, *max_size, *format, *closed_form),
        Command::Forward {
            level,
            measure_file,
            targets,
            format,
        } => forward(level.level()?, measure_file, targets, *format),
        Command::Certify { level, moments, target, a } => certify(level.level()?, moments, target, *a),
        Command::CheckIdentity { level, max_size } => check_identity(level.level()?, *max_size),
        Command::Oracle { level, max_size } => oracle(level.level()?, *max_size),
        Command::Simulate {
            level,
            n,
            u,
            skew,
            samples,
            seed,
            targets,
        } => simulate(level.level()?, *n, *u, *skew, *samples, *seed, targets),
        Command::Setcat { op } => setcat_cmd(op),
    }
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult {
                    exit_code: 0,
                    payload: Some(text),
                    diagnostics: Vec::new(),
                },
                _ => CommandResult {
                    exit_code: 2,
                    payload: None,
                    diagnostics: vec![text.trim_end().to_string()],
                },
            };
        }
    };
    let outcome = thread_cap(cli.threads).and_then(|cap| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            if n == 0 {
                return Err(Failure::Input("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Failure::Internal(e.to_string()))?;
        pool.install(|| dispatch(&cli.command))
    });
    match outcome {
        Ok(o) => CommandResult {
            exit_code: o.code,
            payload: Some(o.payload),
            diagnostics: o.diagnostics,
        },
        Err(Failure::Input(msg)) => CommandResult {
            exit_code: 2,
            payload: None,
            diagnostics: vec![format!("error: {msg}")],
        },
        Err(Failure::Internal(msg)) => CommandResult {
            exit_code: 3,
            payload: None,
            diagnostics: vec![format!("internal error: {msg}")],
        },
    }
}
