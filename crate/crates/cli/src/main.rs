//! Command-line front end: parses system definitions, dispatches the
//! computations, and emits JSON reports plus optional CSV traces.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::process::ExitCode;
use sympath::error::Error;
use sympath::linalg::C64;
use sympath::mean_index::{self, Direction, EstimatorParams, Scheme, Trace};
use sympath::propagate::{fundamental_solution, Control};
use sympath::report::{obj, JsonValue as J};
use sympath::systems::{catalog, parse_system_str, serialize_system, Params, SymmetricField};
use sympath::{fredholm, maslov, rotation};

#[derive(Parser)]
#[command(name = "sympath", version, about = "Maslov-type indices, mean-index intervals, \
rotation numbers and Fredholm tests for linear Hamiltonian systems z' = J B(t) z")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Catalog system name (constant_k, rotation_k, hyperbolic, periodic_demo,
    /// quasi_periodic_demo, example_45, asymptotic_blend)
    #[arg(long, conflicts_with = "system")]
    catalog: Option<String>,
    /// Path to a JSON system definition file
    #[arg(long)]
    system: Option<String>,
    /// Catalog parameter k (field strength for constant_k / rotation_k)
    #[arg(long = "k", allow_hyphen_values = true)]
    k_param: Option<f64>,
    /// Catalog parameter d (half dimension)
    #[arg(long)]
    d: Option<f64>,
    /// Catalog parameter: period of the constant_k / hyperbolic framings
    #[arg(long)]
    period: Option<f64>,
    /// Extra catalog parameters as name=value
    #[arg(long = "param", value_parser = parse_kv)]
    params: Vec<(String, f64)>,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.to_string(), v))
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<String>,
    /// Write the CSV trace here (off by default)
    #[arg(long)]
    trace: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Maslov-type index i_omega of the fundamental solution on [t0, t1]
    Index {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        t1: f64,
        /// omega on the unit circle: 1, -1, i, -i or angle:<radians>
        #[arg(long, default_value = "1")]
        omega: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Mean-index interval [I_L, I_U]
    MeanIndex {
        #[command(flatten)]
        sys: SystemArgs,
        /// direct or dyadic
        #[arg(long, default_value = "direct")]
        scheme: String,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        /// Dyadic window exponent (window length u 2^k), for --scheme dyadic
        #[arg(long = "dyadic-k")]
        dyadic_k: Option<u32>,
        /// Number of dyadic windows
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 256)]
        theta_samples: usize,
        #[arg(long, default_value = "forward")]
        direction: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rotation number of a 2-dimensional system
    Rotation {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Initial direction u,v
        #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
        z0: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fredholm verdict: monodromy spectrum test plus lambda sweep
    Fredholm {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 0.1)]
        lambda_max: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        theta_samples: usize,
        /// Estimator horizon for non-periodic fields
        #[arg(long, default_value_t = 150.0)]
        horizon: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Lambda sweep of the mean index of B + lambda I
    Sweep {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 0.1)]
        lambda_max: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        theta_samples: usize,
        #[arg(long, default_value_t = 150.0)]
        horizon: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the calibration and invariant suites
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse a system file and print its canonical serialization
    Normalize {
        /// Path to a JSON system definition file
        file: String,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Propagation { .. } => 3,
        Error::IndexUnstable { .. } => 4,
        Error::InternalConsistency(_)
        | Error::Integrity(_)
        | Error::EquivalenceViolation(_)
        | Error::Precision { .. }
        | Error::LiftFailure(_) => 5,
        _ => 2,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::CatalogMiss(_) => "catalog_miss",
        Error::Construction(_) => "construction",
        Error::StructureMismatch(_) => "structure_mismatch",
        Error::Domain { .. } => "domain",
        Error::Propagation { .. } => "propagation_failure",
        Error::IndexUnstable { .. } => "index_unstable",
        Error::Integrity(_) => "numerical_integrity",
        Error::Precision { .. } => "precision",
        Error::InternalConsistency(_) => "internal_consistency",
        Error::InsufficientHorizon(_, _) => "insufficient_horizon",
        Error::Range { .. } => "range",
        Error::LiftFailure(_) => "lift_failure",
        Error::Precondition(_) => "precondition",
        Error::EquivalenceViolation(_) => "equivalence_violation",
        Error::Config(_) => "config",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let diag = obj(vec![
                ("error", J::Str(error_kind(&err).to_string())),
                ("message", J::Str(err.to_string())),
            ]);
            eprintln!("{}", diag.compact());
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_field(sys: &SystemArgs) -> Result<(SymmetricField, J), Error> {
    if let Some(path) = &sys.system {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
        let (_, field) = parse_system_str(&text)?;
        let desc = obj(vec![("source", J::Str("file".into())), ("path", J::Str(path.clone()))]);
        return Ok((field, desc));
    }
    let name = sys
        .catalog
        .as_deref()
        .ok_or_else(|| Error::Config("one of --catalog or --system is required".into()))?;
    let mut params: Params = sys.params.iter().cloned().collect();
    if let Some(k) = sys.k_param {
        params.insert("k".into(), k);
    }
    if let Some(d) = sys.d {
        params.insert("d".into(), d);
    }
    if let Some(p) = sys.period {
        params.insert("period".into(), p);
    }
    let field = catalog(name, &params)?;
    let param_fields: Vec<(String, J)> =
        params.iter().map(|(k, v)| (k.clone(), J::Num(*v))).collect();
    let desc = obj(vec![
        ("source", J::Str("catalog".into())),
        ("name", J::Str(name.to_string())),
        ("params", J::Obj(param_fields)),
    ]);
    Ok((field, desc))
}

fn parse_omega(s: &str) -> Result<C64, Error> {
    let omega = match s.trim() {
        "1" => C64::new(1.0, 0.0),
        "-1" => C64::new(-1.0, 0.0),
        "i" | "I" => C64::new(0.0, 1.0),
        "-i" | "-I" => C64::new(0.0, -1.0),
        other => {
            let angle = other
                .strip_prefix("angle:")
                .ok_or_else(|| {
                    Error::Config(format!(
                        "omega must be 1, -1, i, -i or angle:<radians>, got `{other}`"
                    ))
                })?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad omega angle: {e}")))?;
            C64::new(angle.cos(), angle.sin())
        }
    };
    Ok(omega)
}

fn emit(report: J, out: &Option<String>) -> Result<(), Error> {
    let text = report.pretty(0);
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| Error::Config(format!("cannot write {path}: {e}"))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn index_control_for(field: &SymmetricField) -> Control {
    Control::default().with_max_step((0.35 / field.bound().max(0.25)).min(0.1))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Index { sys, t0, t1, omega, output } => {
            let (field, source) = load_field(&sys)?;
            let omega_c = parse_omega(&omega)?;
            let path = fundamental_solution(&field, (t0, t1), &index_control_for(&field))?;
            let idx = maslov::i_omega(&path, omega_c)?;
            if let Some(trace_path) = &output.trace {
                let mut file = std::fs::File::create(trace_path)
                    .map_err(|e| Error::Config(format!("cannot create {trace_path}: {e}")))?;
                let io = writeln!(file, "time,kernel_dim,signature,contribution,d_slope")
                    .and_then(|_| {
                        for c in &idx.crossings {
                            writeln!(
                                file,
                                "{:.12e},{},{},{},{:.6e}",
                                c.time, c.kernel_dim, c.signature, c.contribution, c.d_slope
                            )?;
                        }
                        Ok(())
                    });
                io.map_err(|e| Error::Config(format!("trace write failed: {e}")))?;
            }
            let report = obj(vec![
                ("command", J::Str("index".into())),
                (
                    "config",
                    obj(vec![
                        ("system", source),
                        ("t0", J::Num(t0)),
                        ("t1", J::Num(t1)),
                        ("omega", J::Str(omega.clone())),
                    ]),
                ),
                (
                    "result",
                    obj(vec![
                        ("index", J::Int(idx.value)),
                        ("epsilon", J::Num(idx.epsilon)),
                        ("crossings", J::Int(idx.crossings.len() as i64)),
                        ("im_certificate", J::Num(idx.im_certificate)),
                        ("sympl_residual", J::Num(path.sympl_residual())),
                    ]),
                ),
            ]);
            emit(report, &output.out)
        }
        Command::MeanIndex {
            sys,
            scheme,
            horizon,
            dyadic_k,
            n,
            theta_samples,
            direction,
            output,
        } => {
            let (field, source) = load_field(&sys)?;
            let dir = match direction.as_str() {
                "forward" => Direction::Forward,
                "backward" => Direction::Backward,
                other => {
                    return Err(Error::Config(format!(
                        "direction must be forward or backward, got `{other}`"
                    )))
                }
            };
            let scheme_val = match scheme.as_str() {
                "direct" => Scheme::Direct { horizon },
                "dyadic" => Scheme::Dyadic {
                    k: dyadic_k.ok_or_else(|| {
                        Error::Config("--scheme dyadic requires --dyadic-k".into())
                    })?,
                    n: n.ok_or_else(|| Error::Config("--scheme dyadic requires --n".into()))?,
                },
                other => {
                    return Err(Error::Config(format!(
                        "scheme must be direct or dyadic, got `{other}`"
                    )))
                }
            };
            let params = EstimatorParams { theta_samples };
            let est = mean_index::mean_index_interval(&field, dir, scheme_val, &params)?;
            let trace_path = if let Some(path) = &output.trace {
                let mut file = std::fs::File::create(path)
                    .map_err(|e| Error::Config(format!("cannot create {path}: {e}")))?;
                let io = match &est.trace {
                    Trace::Direct(samples) => writeln!(file, "l,a_l").and_then(|_| {
                        for (l, a) in samples {
                            writeln!(file, "{l},{a:e}")?;
                        }
                        Ok(())
                    }),
                    Trace::Dyadic(table) => {
                        writeln!(file, "k,n,shift_index,f,g,h,h_residual").and_then(|_| {
                            for row in &table.rows {
                                writeln!(
                                    file,
                                    "{},{},{},{},{},{:e},{:e}",
                                    table.k,
                                    table.n,
                                    row.shift_index,
                                    row.f,
                                    row.g,
                                    row.h,
                                    row.h_residual
                                )?;
                            }
                            Ok(())
                        })
                    }
                };
                io.map_err(|e| Error::Config(format!("trace write failed: {e}")))?;
                J::Str(path.clone())
            } else {
                J::Null
            };
            let report = obj(vec![
                ("command", J::Str("mean-index".into())),
                (
                    "config",
                    obj(vec![
                        ("system", source),
                        ("scheme", J::Str(scheme.clone())),
                        ("horizon", J::Num(horizon)),
                        ("dyadic_k", dyadic_k.map(|k| J::Int(k as i64)).unwrap_or(J::Null)),
                        ("n", n.map(|v| J::Int(v as i64)).unwrap_or(J::Null)),
                        ("theta_samples", J::Int(theta_samples as i64)),
                        ("direction", J::Str(direction.clone())),
                    ]),
                ),
                (
                    "result",
                    obj(vec![
                        ("lower", J::Num(est.lower)),
                        ("upper", J::Num(est.upper)),
                        ("residual_bound", J::Num(est.residual_bound)),
                        ("residual_is_rigorous", J::Bool(est.residual_is_rigorous)),
                        ("trace_csv_path", trace_path),
                    ]),
                ),
            ]);
            emit(report, &output.out)
        }
        Command::Rotation { sys, horizon, z0, output } => {
            let (field, source) = load_field(&sys)?;
            let z = {
                let parts: Vec<&str> = z0.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::Config("z0 must be u,v".into()));
                }
                let u: f64 =
                    parts[0].parse().map_err(|e| Error::Config(format!("bad z0: {e}")))?;
                let v: f64 =
                    parts[1].parse().map_err(|e| Error::Config(format!("bad z0: {e}")))?;
                (u, v)
            };
            let r = rotation::rotation_number(&field, horizon, z)?;
            if let Some(path) = &output.trace {
                let spath =
                    fundamental_solution(&field, (0.0, horizon), &index_control_for(&field))?;
                let lift = rotation::angle_lift(&spath, z)?;
                let mut file = std::fs::File::create(path)
                    .map_err(|e| Error::Config(format!("cannot create {path}: {e}")))?;
                lift.to_csv(&mut file)
                    .map_err(|e| Error::Config(format!("trace write failed: {e}")))?;
            }
            let report = obj(vec![
                ("command", J::Str("rotation".into())),
                (
                    "config",
                    obj(vec![
                        ("system", source),
                        ("horizon", J::Num(horizon)),
                        ("z0", J::Str(z0.clone())),
                    ]),
                ),
                (
                    "result",
                    obj(vec![
                        ("rotation_number", J::Num(r.value)),
                        ("trend", J::Num(r.trend)),
                        ("theta_end", J::Num(r.theta_end)),
                    ]),
                ),
            ]);
            emit(report, &output.out)
        }
        Command::Fredholm { sys, lambda_max, steps, theta_samples, horizon, output } => {
            let (field, source) = load_field(&sys)?;
            let params = fredholm::SweepParams { theta_samples, horizon };
            let report = fredholm::fredholm_verdict(&field, lambda_max, steps, &params)?;
            let doc = obj(vec![
                ("command", J::Str("fredholm".into())),
                (
                    "config",
                    obj(vec![
                        ("system", source),
                        ("lambda_max", J::Num(lambda_max)),
                        ("steps", J::Int(steps as i64)),
                        ("theta_samples", J::Int(theta_samples as i64)),
                        ("horizon", J::Num(horizon)),
                    ]),
                ),
                ("result", fredholm_json(&report)),
            ]);
            emit(doc, &output.out)
        }
        Command::Sweep { sys, lambda_max, steps, theta_samples, horizon, output } => {
            let (field, source) = load_field(&sys)?;
            let params = fredholm::SweepParams { theta_samples, horizon };
            let sweep = fredholm::lambda_sweep(&field, lambda_max, steps, &params)?;
            let doc = obj(vec![
                ("command", J::Str("sweep".into())),
                (
                    "config",
                    obj(vec![
                        ("system", source),
                        ("lambda_max", J::Num(lambda_max)),
                        ("steps", J::Int(steps as i64)),
                        ("theta_samples", J::Int(theta_samples as i64)),
                        ("horizon", J::Num(horizon)),
                    ]),
                ),
                ("result", sweep_json(&sweep)),
            ]);
            emit(doc, &output.out)
        }
        Command::Selftest { seed, output } => {
            let (report, ok) = selftest(seed);
            emit(report, &output.out)?;
            if ok {
                Ok(())
            } else {
                Err(Error::InternalConsistency("selftest failed".into()))
            }
        }
        Command::Normalize { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| Error::Config(format!("cannot read {file}: {e}")))?;
            let (doc, _) = parse_system_str(&text)?;
            println!("{}", serialize_system(&doc));
            Ok(())
        }
    }
}

fn sweep_json(sweep: &fredholm::LambdaSweep) -> J {
    let rows: Vec<J> = sweep
        .lambdas
        .iter()
        .zip(&sweep.indices)
        .zip(&sweep.residuals)
        .map(|((&l, &i), &r)| {
            obj(vec![("lambda", J::Num(l)), ("index", J::Num(i)), ("residual", J::Num(r))])
        })
        .collect();
    obj(vec![
        ("sweep", J::Arr(rows)),
        ("constancy", J::Bool(sweep.constant)),
        ("jump_locations", J::Arr(sweep.jump_locations.iter().map(|&x| J::Num(x)).collect())),
    ])
}

fn fredholm_json(report: &fredholm::FredholmReport) -> J {
    let spectrum: Vec<J> = report
        .spectrum
        .spectrum
        .iter()
        .map(|z| obj(vec![("re", J::Num(z.re)), ("im", J::Num(z.im))]))
        .collect();
    let verdict = match report.verdict {
        fredholm::Verdict::Fredholm => "fredholm",
        fredholm::Verdict::NotFredholm => "not_fredholm",
        fredholm::Verdict::Inconclusive => "inconclusive",
    };
    obj(vec![
        ("spectrum", J::Arr(spectrum)),
        ("unit_circle_distance", J::Num(report.spectrum.unit_circle_distance)),
        ("verdict", J::Str(verdict.into())),
        ("sweep", sweep_json(&report.sweep)),
        ("agreement", J::Bool(report.agreement)),
    ])
}

/// Calibration and invariant checks; returns (report, all_passed).
fn selftest(seed: u64) -> (J, bool) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<J> = Vec::new();
    let mut all_ok = true;
    let check = |name: &str, outcome: Result<bool, Error>, lines: &mut Vec<J>| -> bool {
        let (pass, detail) = match outcome {
            Ok(true) => (true, String::new()),
            Ok(false) => (false, "check returned false".to_string()),
            Err(e) => (false, e.to_string()),
        };
        println!("{}: {}", if pass { "PASS" } else { "FAIL" }, name);
        lines.push(obj(vec![
            ("name", J::Str(name.to_string())),
            ("pass", J::Bool(pass)),
            ("detail", J::Str(detail)),
        ]));
        pass
    };

    let ctl = Control::default();
    let one = C64::new(1.0, 0.0);
    let eye = sympath::linalg::RMat::identity(2, 2);
    let rot = |t1: f64| -> Result<sympath::propagate::SymplecticPath, Error> {
        let p: Params = [("k".to_string(), 1.0)].into_iter().collect();
        fundamental_solution(&catalog("constant_k", &p)?, (0.0, t1), &ctl)
    };

    all_ok &= check(
        "calibration: rotation index formula",
        (|| {
            for l in [3.0f64, 10.0, 25.0] {
                let idx = maslov::i_omega(&rot(l)?, one)?;
                let expect = 2 * (l / (2.0 * std::f64::consts::PI)).floor() as i64 + 1;
                if idx.value != expect {
                    return Ok(false);
                }
            }
            Ok(true)
        })(),
        &mut lines,
    );

    all_ok &= check(
        "calibration: i_1 + d = iota(I, gamma)",
        (|| {
            for _ in 0..5 {
                let field = sympath::testkit::random_trig_field(&mut rng, 1, 1.5, None);
                let path = fundamental_solution(&field, (0.0, 8.0), &ctl)?;
                let i1 = maslov::i_omega(&path, one)?.value;
                let io = maslov::iota(&path, &eye, one)?.value;
                if i1 + 1 != io {
                    return Ok(false);
                }
            }
            Ok(true)
        })(),
        &mut lines,
    );

    all_ok &= check(
        "calibration: positive-path oracle agreement",
        (|| {
            for _ in 0..10 {
                let field = sympath::testkit::random_positive_field(&mut rng, 1, 2.0);
                let path = fundamental_solution(&field, (0.0, 6.0), &ctl)?;
                for omega in [one, C64::new(0.0, 1.0), C64::new(-1.0, 0.0)] {
                    let o = maslov::positive_path_oracle(&path, &eye, omega)?;
                    let i = maslov::iota(&path, &eye, omega)?;
                    if o != i.value {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })(),
        &mut lines,
    );

    all_ok &= check(
        "invariant: anchor comparison",
        (|| {
            let field = sympath::testkit::random_positive_field(&mut rng, 1, 1.5);
            let path = fundamental_solution(&field, (0.0, 7.0), &ctl)?;
            let (a, b) = path.domain();
            let top =
                maslov::iota_window_scaled(&path, path.eval_scaled(a)?, one, path.domain())?.value;
            let bottom =
                maslov::iota_window_scaled(&path, path.eval_scaled(b)?, one, path.domain())?.value;
            for _ in 0..10 {
                let m = sympath::testkit::random_symplectic(&mut rng, 1, 0.8);
                let v = maslov::iota(&path, &m, one)?.value;
                if !(bottom <= v && v <= top && (v - top).abs() <= 2) {
                    return Ok(false);
                }
            }
            Ok(true)
        })(),
        &mut lines,
    );

    all_ok &= check(
        "invariant: window sandwich",
        (|| {
            for _ in 0..5 {
                let field = sympath::testkit::random_trig_field(&mut rng, 1, 1.5, None);
                let (f, g, h) = mean_index::fgh(&field, 6, 64)?;
                if !(f as f64 >= h && h >= g as f64 && g >= f - 2) {
                    return Ok(false);
                }
            }
            Ok(true)
        })(),
        &mut lines,
    );

    all_ok &= check(
        "invariant: growth bound",
        (|| {
            let field = sympath::testkit::random_trig_field(&mut rng, 1, 2.0, None);
            let est = mean_index::mean_index_interval(
                &field,
                Direction::Forward,
                Scheme::Direct { horizon: 40.0 },
                &EstimatorParams::default(),
            )?;
            let bound = field.bound() / std::f64::consts::PI;
            Ok(est.lower >= -bound - est.residual_bound - 0.2
                && est.upper <= bound + est.residual_bound + 0.2)
        })(),
        &mut lines,
    );

    let report = obj(vec![
        ("command", J::Str("selftest".into())),
        ("config", obj(vec![("seed", J::Int(seed as i64))])),
        ("checks", J::Arr(lines)),
        ("pass", J::Bool(all_ok)),
    ]);
    (report, all_ok)
}
