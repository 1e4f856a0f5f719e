//! `ctxform` command-line front end.
//!
//! Every analysis prints a JSON report envelope (or a CSV projection where
//! one exists) and maps its verdict onto the exit status: 0 pass, 1 finding,
//! 2 usage or input error, 3 marginal or uncertified.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctxform::bookkeeping::{min_bookkeeping_with_prior, BookkeepingCaps};
use ctxform::embedding::{check_boolean_embedding, EmbeddingStatus};
use ctxform::holonomy::{enumerate_loops, flatness_check, loop_holonomy, parse_atlas, DEFAULT_MAX_LOOP_LEN};
use ctxform::intervention::{commutator_norm, order_effect_report, parse_model};
use ctxform::io::{behavior_from_file, read_to_string, validate_behavior_file, write_atomic, BehaviorFile};
use ctxform::nonlocality::{check_no_signalling, local_decomposition, parse_bipartite};
use ctxform::projection::{
    branch_data_from_behavior, extract_phase, glued_projection, interference_term, ltp_predict, BranchData,
    GluingPhase,
};
use ctxform::report::Report;
use ctxform::tradeoff::{check_monotone, parse_tradeoff_config, report_to_csv_string, run_tradeoff, sampling_slack};
use ctxform::{Behavior, Error, DEFAULT_TOL};

#[derive(Parser, Debug)]
#[command(name = "ctxform", version, about = "Contextuality and interference-phase analyses")]
struct Cli {
    /// Numerical tolerance for feasibility and residual checks.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// RNG seed; overrides any seed in a configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here (atomically) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; defaults to CSV when `--out` ends in `.csv` and the
    /// subcommand has a CSV form, JSON otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a behavior file against the schema and normalization rules.
    Validate { file: PathBuf },
    /// Decide whether the tables extend to one joint distribution.
    Embed { file: PathBuf },
    /// Glued projection for branch data at a given phase.
    Interfere {
        #[command(flatten)]
        branches: BranchArgs,
        #[arg(long)]
        theta: f64,
    },
    /// Gluing phase implied by an observed total.
    Phase {
        #[command(flatten)]
        branches: BranchArgs,
        /// Observed P(B); read from the behavior when omitted.
        #[arg(long)]
        observed: Option<f64>,
    },
    /// Order effect between two interventions of a model.
    OrderEffect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        first: String,
        #[arg(long)]
        second: String,
    },
    /// Loop holonomy or flatness of a transition atlas.
    Holonomy {
        #[arg(long)]
        atlas: PathBuf,
        /// Comma-separated closed path, e.g. `a,b,a`.
        #[arg(long = "loop", value_delimiter = ',')]
        loop_path: Option<Vec<String>>,
        #[arg(long, default_value_t = DEFAULT_MAX_LOOP_LEN)]
        max_loop_len: usize,
    },
    /// Minimal classical context-memory cost of reproducing a behavior.
    Bookkeeping {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_lambda: usize,
        #[arg(long, default_value_t = 4)]
        max_memory: usize,
        /// JSON object of context id to prior weight.
        #[arg(long)]
        context_prior: Option<PathBuf>,
    },
    /// Local decomposition and CHSH value of a bipartite behavior.
    Bell { file: PathBuf },
    /// No-signalling check of a bipartite behavior.
    Nosignal { file: PathBuf },
    /// Seeded interference versus memory simulation.
    Tradeoff {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct BranchArgs {
    #[arg(long)]
    p_a: Option<f64>,
    #[arg(long)]
    p_b_given_a: Option<f64>,
    #[arg(long)]
    p_b_given_not_a: Option<f64>,
    /// Behavior file to read branch statistics from (outcome 0 is "yes").
    #[arg(long, conflicts_with_all = ["p_a", "p_b_given_a", "p_b_given_not_a"])]
    behavior: Option<PathBuf>,
    #[arg(long, requires = "behavior")]
    event_a: Option<String>,
    #[arg(long, requires = "behavior")]
    event_b: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

/// What to print and which status to exit with.
struct Outcome {
    body: String,
    code: u8,
}

impl Outcome {
    fn json(report: Report, code: u8) -> Self {
        Outcome {
            body: report.to_json() + "\n",
            code,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|o| emit(&cli, o)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit(cli: &Cli, outcome: Outcome) -> CliResult<u8> {
    match &cli.out {
        Some(path) => write_atomic(path, outcome.body.as_bytes())?,
        None => print!("{}", outcome.body),
    }
    Ok(outcome.code)
}

fn run(cli: &Cli) -> CliResult<Outcome> {
    let tol = cli.tol;
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Usage(format!("--tol must be a non-negative number, got {tol}")));
    }
    let csv_ok = matches!(cli.command, Command::Holonomy { .. } | Command::Bell { .. } | Command::Tradeoff { .. });
    let csv_out = cli.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    let format = match cli.format {
        Some(Format::Csv) if !csv_ok => {
            return Err(CliError::Usage("this subcommand has no CSV output; use --format json".into()));
        }
        Some(f) => f,
        None if csv_out && csv_ok => Format::Csv,
        None => Format::Json,
    };
    match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Embed { file } => embed(file, tol),
        Command::Interfere { branches, theta } => interfere(branches, *theta),
        Command::Phase { branches, observed } => phase(branches, *observed, tol),
        Command::OrderEffect { model, first, second } => order(model, first, second, tol),
        Command::Holonomy {
            atlas,
            loop_path,
            max_loop_len,
        } => holonomy(atlas, loop_path.as_deref(), *max_loop_len, tol, format),
        Command::Bookkeeping {
            file,
            max_lambda,
            max_memory,
            context_prior,
        } => bookkeeping(file, *max_lambda, *max_memory, context_prior.as_deref(), tol),
        Command::Bell { file } => bell(file, tol, format),
        Command::Nosignal { file } => nosignal(file, tol),
        Command::Tradeoff { config } => tradeoff(config, cli.seed, format),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Core(Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    })
}

fn load_behavior_file(path: &Path) -> CliResult<Behavior> {
    let file: BehaviorFile = parse_json(&read_to_string(path)?)?;
    Ok(behavior_from_file(&file)?)
}

fn status_code(status: EmbeddingStatus) -> u8 {
    match status {
        EmbeddingStatus::Embeddable => 0,
        EmbeddingStatus::NonEmbeddable => 1,
        EmbeddingStatus::Marginal => 3,
    }
}

fn validate(path: &Path) -> CliResult<Outcome> {
    let file: BehaviorFile = parse_json(&read_to_string(path)?)?;
    let violations = validate_behavior_file(&file);
    let pass = violations.is_empty();
    let report = Report::new("validate", pass, json!({ "violations": violations }));
    Ok(Outcome::json(report, if pass { 0 } else { 1 }))
}

fn embed(path: &Path, tol: f64) -> CliResult<Outcome> {
    let b = load_behavior_file(path)?;
    let cert = check_boolean_embedding(&b, tol)?;
    let mut report = Report::new("embed", cert.status == EmbeddingStatus::Embeddable, &cert)
        .residual("margin", cert.margin)
        .residual("disturbance", cert.disturbance_residual);
    if let Some(r) = cert.reproduction_residual {
        report = report.residual("reproduction", r);
    }
    Ok(Outcome::json(report, status_code(cert.status)))
}

fn branch_data(args: &BranchArgs) -> CliResult<(BranchData, Option<f64>)> {
    if let Some(path) = &args.behavior {
        let (Some(a), Some(b)) = (&args.event_a, &args.event_b) else {
            return Err(CliError::Usage("--behavior needs --event-a and --event-b".into()));
        };
        let behavior = load_behavior_file(path)?;
        return Ok(branch_data_from_behavior(&behavior, a, b)?);
    }
    match (args.p_a, args.p_b_given_a, args.p_b_given_not_a) {
        (Some(pa), Some(pba), Some(pbna)) => Ok((BranchData::from_partition(pa, pba, pbna)?, None)),
        _ => Err(CliError::Usage(
            "give either --p-a, --p-b-given-a and --p-b-given-not-a, or --behavior with --event-a and --event-b"
                .into(),
        )),
    }
}

fn interfere(args: &BranchArgs, theta: f64) -> CliResult<Outcome> {
    if !theta.is_finite() {
        return Err(CliError::Usage(format!("--theta must be finite, got {theta}")));
    }
    let (d, _) = branch_data(args)?;
    let phase = GluingPhase::new(theta);
    let projected = glued_projection(&d, phase);
    let details = json!({
        "branches": d,
        "theta": phase.radians(),
        "ltp": ltp_predict(&d),
        "interference": interference_term(&d, phase),
        "probability": projected.probability,
        "out_of_range": projected.out_of_range,
    });
    let pass = !projected.out_of_range;
    let excess = (projected.probability - 1.0).max(-projected.probability).max(0.0);
    let report = Report::new("interfere", pass, details).residual("range_excess", excess);
    Ok(Outcome::json(report, if pass { 0 } else { 1 }))
}

fn phase(args: &BranchArgs, observed: Option<f64>, tol: f64) -> CliResult<Outcome> {
    let (d, from_behavior) = branch_data(args)?;
    let observed = observed.or(from_behavior).ok_or_else(|| {
        CliError::Usage("no observed total: pass --observed or a behavior with a context holding B without A".into())
    })?;
    if !observed.is_finite() {
        return Err(CliError::Usage(format!("--observed must be finite, got {observed}")));
    }
    let fit = extract_phase(observed, &d, tol)?;
    let details = json!({ "branches": d, "observed": observed, "fit": fit });
    let report = Report::new("phase", fit.feasible, details).residual("excess", fit.excess);
    Ok(Outcome::json(report, if fit.feasible { 0 } else { 1 }))
}

fn order(model: &Path, first: &str, second: &str, tol: f64) -> CliResult<Outcome> {
    let m = parse_model(&read_to_string(model)?)?;
    let report = order_effect_report(&m, first, second)?;
    let comm = commutator_norm(m.op(first)?, m.op(second)?)?;
    let pass = report.tv <= tol;
    let mut details = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    details["commutator_norm"] = json!(comm);
    let out = Report::new("order-effect", pass, details)
        .residual("tv", report.tv)
        .residual("commutator_norm", comm);
    Ok(Outcome::json(out, if pass { 0 } else { 1 }))
}

fn holonomy(atlas: &Path, path: Option<&[String]>, max_len: usize, tol: f64, format: Format) -> CliResult<Outcome> {
    let atlas = parse_atlas(&read_to_string(atlas)?)?;
    let loops: Vec<Vec<String>> = match path {
        Some(p) => vec![p.to_vec()],
        None => enumerate_loops(&atlas, max_len)?,
    };
    if format == Format::Csv {
        let mut rows = String::from("loop,branch,phase\n");
        let mut flat = true;
        for l in &loops {
            let refs: Vec<&str> = l.iter().map(String::as_str).collect();
            let h = match loop_holonomy(&atlas, &refs, tol) {
                Ok(h) => h,
                Err(Error::BrokenChain { .. }) if path.is_none() => continue,
                Err(e) => return Err(e.into()),
            };
            flat &= h.flat && h.non_returning.is_empty();
            for (branch, phase) in &h.per_branch_phase {
                rows.push_str(&format!("{},{},{:?}\n", l.join("-"), branch, phase));
            }
        }
        return Ok(Outcome {
            body: rows,
            code: if flat { 0 } else { 1 },
        });
    }
    match path {
        Some(p) => {
            let refs: Vec<&str> = p.iter().map(String::as_str).collect();
            let h = loop_holonomy(&atlas, &refs, tol)?;
            let pass = h.flat && h.non_returning.is_empty();
            let report = Report::new("holonomy", pass, &h).residual("max_abs_phase", h.max_abs_phase);
            Ok(Outcome::json(report, if pass { 0 } else { 1 }))
        }
        None => {
            let f = flatness_check(&atlas, max_len, tol)?;
            let report = Report::new("holonomy", f.flat, &f).residual("max_abs_phase", f.max_abs_phase);
            Ok(Outcome::json(report, if f.flat { 0 } else { 1 }))
        }
    }
}

fn bookkeeping(
    file: &Path,
    max_lambda: usize,
    max_memory: usize,
    prior: Option<&Path>,
    tol: f64,
) -> CliResult<Outcome> {
    let b = load_behavior_file(file)?;
    let prior: Option<BTreeMap<String, f64>> = match prior {
        Some(p) => Some(parse_json(&read_to_string(p)?)?),
        None => None,
    };
    let caps = BookkeepingCaps {
        max_lambda,
        max_memory,
        ..BookkeepingCaps::default()
    };
    let r = min_bookkeeping_with_prior(&b, caps, tol, prior.as_ref())?;
    let free = r.reproduces && r.i_m_c <= tol;
    let code = if !r.certified {
        3
    } else if free {
        0
    } else {
        1
    };
    let mut report = Report::new("bookkeeping", free, &r).residual("I_M_C", r.i_m_c);
    if let Some(res) = r.reproduction_residual {
        report = report.residual("reproduction", res);
    }
    Ok(Outcome::json(report, code))
}

fn bell(file: &Path, tol: f64, format: Format) -> CliResult<Outcome> {
    let b = parse_bipartite(&read_to_string(file)?)?;
    let ns = check_no_signalling(&b, tol);
    let dec = local_decomposition(&b, tol)?;
    let code = status_code(dec.status);
    if format == Format::Csv {
        let s = dec.chsh.map(|v| format!("{v:?}")).unwrap_or_default();
        let status = serde_json::to_value(dec.status).map_err(|e| CliError::Usage(e.to_string()))?;
        let body = format!(
            "S,ns_residual,local_status\n{},{:?},{}\n",
            s,
            ns.max_residual,
            status.as_str().unwrap_or_default()
        );
        return Ok(Outcome { body, code });
    }
    let mut report = Report::new(
        "bell",
        dec.status == EmbeddingStatus::Embeddable,
        json!({ "local": dec, "no_signalling": ns }),
    )
    .residual("margin", dec.margin)
    .residual("ns_residual", ns.max_residual);
    if let Some(s) = dec.chsh {
        report = report.residual("S", s);
    }
    Ok(Outcome::json(report, code))
}

fn nosignal(file: &Path, tol: f64) -> CliResult<Outcome> {
    let b = parse_bipartite(&read_to_string(file)?)?;
    let ns = check_no_signalling(&b, tol);
    let report = Report::new("nosignal", ns.pass, &ns).residual("max_residual", ns.max_residual);
    Ok(Outcome::json(report, if ns.pass { 0 } else { 1 }))
}

fn tradeoff(config: &Path, seed: Option<u64>, format: Format) -> CliResult<Outcome> {
    let mut cfg = parse_tradeoff_config(&read_to_string(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_tradeoff(&cfg)?;
    let slack = sampling_slack(cfg.trials);
    let checks: Vec<_> = report.runs.iter().map(|r| check_monotone(&r.levels, slack, 1)).collect();
    let pass = checks.iter().all(|c| c.monotone);
    let code = if pass { 0 } else { 1 };
    if format == Format::Csv {
        return Ok(Outcome {
            body: report_to_csv_string(&report)?,
            code,
        });
    }
    let worst = checks.iter().map(|c| c.worst_increase).fold(0.0, f64::max);
    let out = Report::new(
        "tradeoff",
        pass,
        json!({ "slack": slack, "monotone": checks, "report": report }),
    )
    .residual("worst_increase", worst);
    Ok(Outcome::json(out, code))
}
