//! `thetaprove`: command-line front end for verifying and discovering
//! multiple theta function identities.
//!
//! Exit codes: 0 proved (or success), 2 verified to a finite order only,
//! 1 failed or unsupported, 3 parse error, 64 usage error, 66 unreadable
//! input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use theta_core::contiguous::{common_relation_system, ContiguousRelation, RelationSystem};
use theta_core::linalg::{fmt_rat, Rational};
use theta_core::model::{Identity, IntVector, ThetaTerm};
use theta_core::parallelepiped::pi_points_limited;
use theta_core::parser::{
    format_int_vector, format_mono, format_rat_vector, format_term, parse_candidates, parse_identity,
    parse_relations, parse_shifts, parse_vector, parse_vector_list, ParseError, ParseErrorKind,
};
use theta_core::prover::{
    describe_discovery, discover, explain, verify_with, Certificate, ModeChoice, DISCOVERY_ORDER, MAX_PI_POINTS,
};
use theta_core::qseries::{expand_term, series_denominator, term_denominator, QSeries};

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_PARSE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 66;

#[derive(Parser, Debug)]
#[command(name = "thetaprove", version, about = "Exact verifier for multiple theta function identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Series,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Truncation order for series work.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(i64).range(1..))]
    order: i64,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify an identity file.
    Verify {
        file: PathBuf,
        /// File of shift vectors, one per line.
        #[arg(long)]
        shifts: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Search a candidate pool for linear dependencies.
    Discover {
        relations: PathBuf,
        candidates: PathBuf,
        /// Truncation order of the first nullspace pass.
        #[arg(long, default_value_t = DISCOVERY_ORDER, value_parser = clap::value_parser!(i64).range(1..))]
        order: i64,
        #[arg(long)]
        json: bool,
    },
    /// Expand the terms of a file as Laurent series in the variables.
    Expand {
        file: PathBuf,
        /// Exponent vector to extract, e.g. "(1,0)".
        #[arg(long, allow_hyphen_values = true)]
        eta: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the contiguous relations shared by all terms.
    Relations {
        file: PathBuf,
        #[arg(long)]
        shifts: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// List the integer points of the fundamental parallelepiped.
    Pi {
        /// A file or an inline list such as "(1,1);(0,2)".
        w: String,
        #[arg(long)]
        json: bool,
    },
    /// Print a proof transcript for a JSON certificate.
    Explain { certificate: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {location}: {error}\n{excerpt}")]
    Parse {
        path: String,
        location: String,
        error: ParseError,
        excerpt: String,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

/// A source line with a caret under the error span.
fn excerpt(text: &str, e: &ParseError) -> String {
    let start = e.span.start.min(text.len());
    let line_start = text[..start].rfind('\n').map_or(0, |p| p + 1);
    let line_end = text[start..].find('\n').map_or(text.len(), |p| start + p);
    let width = e.span.end.clamp(start + 1, line_end.max(start + 1)) - start;
    format!(
        "  {}\n  {}{}",
        &text[line_start..line_end],
        " ".repeat(text[line_start..start].chars().count()),
        "^".repeat(width)
    )
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parsed<T>(path: &str, text: &str, r: Result<T, ParseError>) -> Result<T, CliError> {
    r.map_err(|error| CliError::Parse {
        path: path.to_string(),
        location: error.location(text),
        excerpt: excerpt(text, &error),
        error,
    })
}

fn load_shifts(path: Option<&PathBuf>) -> Result<Option<Vec<Vec<Rational>>>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let text = read(p)?;
    parsed(&p.display().to_string(), &text, parse_shifts(&text)).map(Some)
}

fn load_identity(path: &Path) -> Result<Identity, CliError> {
    let text = read(path)?;
    parsed(&path.display().to_string(), &text, parse_identity(&text))
}

fn rats(v: &[Rational]) -> Value {
    Value::from(v.iter().map(fmt_rat).collect::<Vec<_>>())
}

fn ints(v: &[i64]) -> Value {
    Value::from(v.iter().map(|x| x.to_string()).collect::<Vec<_>>())
}

fn emit(json: bool, value: Value, text: String) {
    if json {
        println!("{}", serde_json::to_string_pretty(&value).expect("JSON output"));
    } else {
        print!("{text}");
    }
}

fn cmd_verify(
    file: &Path,
    shifts: Option<&PathBuf>,
    mode: Option<ModeArg>,
    common: &Common,
) -> Result<u8, CliError> {
    let identity = load_identity(file)?;
    let shifts = load_shifts(shifts)?;
    let choice = match mode {
        None => ModeChoice::Auto,
        Some(ModeArg::Exact) => ModeChoice::Exact,
        Some(ModeArg::Series) => ModeChoice::Series,
    };
    let cert = verify_with(&identity, shifts.as_deref(), common.order, choice);
    if common.json {
        println!("{}", cert.to_json());
    } else {
        print!("{}", explain(&cert));
    }
    Ok(cert.status.exit_code() as u8)
}

fn relation_value(rel: &ContiguousRelation, vars: &[String]) -> Value {
    json!({
        "alpha": rats(&rel.alpha),
        "rho": rel.rho.to_string(),
        "w": ints(&rel.w),
        "s": fmt_rat(&rel.s),
        "ratio": format_mono(&rel.ratio(), vars),
    })
}

fn relation_line(i: usize, rel: &ContiguousRelation, vars: &[String]) -> String {
    format!(
        "{}. shift {}: theta(a q^alpha)/theta(a) = {}   w = {}\n",
        i + 1,
        format_rat_vector(&rel.alpha),
        format_mono(&rel.ratio(), vars),
        format_int_vector(&rel.w)
    )
}

fn cmd_relations(file: &Path, shifts: Option<&PathBuf>, common: &Common) -> Result<u8, CliError> {
    let identity = load_identity(file)?;
    let shifts = load_shifts(shifts)?;
    match common_relation_system(&identity, shifts.as_deref()) {
        Ok(system) => {
            let text: String = system
                .relations
                .iter()
                .enumerate()
                .map(|(i, r)| relation_line(i, r, &identity.vars))
                .collect();
            let value = Value::from(
                system
                    .relations
                    .iter()
                    .map(|r| relation_value(r, &identity.vars))
                    .collect::<Vec<_>>(),
            );
            emit(common.json, value, text);
            Ok(EXIT_OK)
        }
        Err(m) => {
            let term = identity
                .terms
                .get(m.term)
                .map(|t| format_term(t, &identity.vars))
                .unwrap_or_default();
            Err(CliError::Failed(format!("{m}\n  offending term: {term}")))
        }
    }
}

fn to_int_vector(v: &[Rational], what: &str) -> Result<IntVector, CliError> {
    v.iter()
        .map(|x| {
            if x.is_integer() {
                i64::try_from(x.to_integer()).map_err(|_| CliError::Usage(format!("{what}: entry too large")))
            } else {
                Err(CliError::Usage(format!("{what}: {} is not an integer", fmt_rat(x))))
            }
        })
        .collect()
}

fn cmd_pi(arg: &str, json: bool) -> Result<u8, CliError> {
    let (label, text) = if Path::new(arg).is_file() {
        (arg.to_string(), read(Path::new(arg))?)
    } else {
        ("<inline>".to_string(), arg.to_string())
    };
    let list = parsed(&label, &text, parse_vector_list(&text))?;
    let w = list
        .iter()
        .map(|v| to_int_vector(v, "W"))
        .collect::<Result<Vec<_>, _>>()?;
    let pi = pi_points_limited(&w, MAX_PI_POINTS).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut out = format!("|Pi_W| = {}\n", pi.points.len());
    for p in &pi.points {
        out.push_str(&format_int_vector(p));
        out.push('\n');
    }
    let value = json!({
        "count": pi.points.len().to_string(),
        "points": pi.points.iter().map(|p| ints(p)).collect::<Vec<_>>(),
    });
    emit(json, value, out);
    Ok(EXIT_OK)
}

/// Terms of an identity file, or of a one-term-per-line candidate file.
fn load_terms(path: &Path) -> Result<(Vec<String>, Vec<ThetaTerm>), CliError> {
    let text = read(path)?;
    match parse_identity(&text) {
        Ok(id) => Ok((id.vars, id.terms)),
        Err(first) => match parse_candidates(&text) {
            Ok(pair) if !pair.1.is_empty() => Ok(pair),
            _ => parsed(&path.display().to_string(), &text, Err(first)),
        },
    }
}

fn series_value(s: &QSeries) -> Value {
    let d = s.denom();
    Value::from(
        s.iter()
            .map(|(k, c)| json!({"exponent": fmt_rat(&Rational::new(k.into(), d.into())), "coefficient": fmt_rat(c)}))
            .collect::<Vec<_>>(),
    )
}

fn cmd_expand(file: &Path, eta: Option<&str>, common: &Common) -> Result<u8, CliError> {
    let (vars, terms) = load_terms(file)?;
    let eta = match eta {
        Some(s) => {
            let v = parsed("--eta", s, parse_vector(s))?;
            let v = to_int_vector(&v, "--eta")?;
            if v.len() != vars.len() {
                return Err(CliError::Usage(format!(
                    "--eta has {} entries, expected {}",
                    v.len(),
                    vars.len()
                )));
            }
            Some(v)
        }
        None => None,
    };
    let d = if terms.len() > 1 {
        series_denominator(
            &Identity {
                vars: vars.clone(),
                terms: terms.clone(),
            },
            &[],
        )
    } else {
        terms.first().map_or(1, term_denominator)
    };
    let mut text = String::new();
    let mut values = Vec::new();
    for (k, term) in terms.iter().enumerate() {
        let map = expand_term(term, common.order, d).map_err(|e| CliError::Failed(e.to_string()))?;
        text.push_str(&format!("term {}: {}\n", k + 1, format_term(term, &vars)));
        let mut entries = Vec::new();
        match &eta {
            Some(e) => {
                let s = map.at(e);
                text.push_str(&format!("  {}: {}\n", format_int_vector(e), s.display()));
                entries.push(json!({"eta": ints(e), "series": series_value(&s)}));
            }
            None => {
                for (e, s) in map.iter() {
                    text.push_str(&format!("  {}: {}\n", format_int_vector(e), s.display()));
                    entries.push(json!({"eta": ints(e), "series": series_value(s)}));
                }
            }
        }
        values.push(json!({"term": format_term(term, &vars), "coefficients": entries}));
    }
    let value = json!({"order": common.order.to_string(), "terms": values});
    emit(common.json, value, text);
    Ok(EXIT_OK)
}

fn cmd_discover(relations: &Path, candidates: &Path, order: i64, json: bool) -> Result<u8, CliError> {
    let rel_text = read(relations)?;
    let (vars, specs) = parsed(&relations.display().to_string(), &rel_text, parse_relations(&rel_text))?;
    let cand_text = read(candidates)?;
    let parsed_cands = parse_candidates(&cand_text);
    let (cvars, cands) = match parsed_cands {
        Err(e) if e.kind == ParseErrorKind::EmptyProduct => (vars.clone(), Vec::new()),
        other => parsed(&candidates.display().to_string(), &cand_text, other)?,
    };
    if cands.is_empty() {
        return Err(CliError::Usage(format!("{}: no candidate products", candidates.display())));
    }
    if cvars != vars {
        return Err(CliError::Usage(format!(
            "variables differ: relations use {:?}, candidates use {:?}",
            vars, cvars
        )));
    }
    let rels: Vec<ContiguousRelation> = specs
        .iter()
        .map(|s| ContiguousRelation::from_ratio(s.alpha.clone(), &s.ratio))
        .collect();
    let system = RelationSystem::new(rels).map_err(|e| CliError::Failed(e.to_string()))?;
    let result = discover(&vars, &system, &cands, order).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut text = describe_discovery(&result, &vars);
    for dep in &result.dependencies {
        text.push('\n');
        text.push_str(&explain(&dep.certificate));
    }
    let value = json!({
        "candidates": result.candidates.iter().map(|t| format_term(t, &vars)).collect::<Vec<_>>(),
        "rejected": result.rejected.iter().map(|r| json!({"candidate": (r.candidate + 1).to_string(), "reason": r.reason})).collect::<Vec<_>>(),
        "pi": result.pi.points.iter().map(|p| ints(p)).collect::<Vec<_>>(),
        "order": result.order.to_string(),
        "dependencies": result.dependencies.iter().map(|d| json!({
            "coefficients": rats(&d.coefficients),
            "certificate": serde_json::from_str::<Value>(&d.certificate.to_json()).expect("certificate JSON"),
        })).collect::<Vec<_>>(),
    });
    emit(json, value, text);
    Ok(EXIT_OK)
}

fn cmd_explain(path: &Path) -> Result<u8, CliError> {
    let text = read(path)?;
    let cert = Certificate::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    print!("{}", explain(&cert));
    Ok(cert.status.exit_code() as u8)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Verify {
            file,
            shifts,
            mode,
            common,
        } => cmd_verify(file, shifts.as_ref(), *mode, common),
        Command::Discover {
            relations,
            candidates,
            order,
            json,
        } => cmd_discover(relations, candidates, *order, *json),
        Command::Expand { file, eta, common } => cmd_expand(file, eta.as_deref(), common),
        Command::Relations { file, shifts, common } => cmd_relations(file, shifts.as_ref(), common),
        Command::Pi { w, json } => cmd_pi(w, *json),
        Command::Explain { certificate } => cmd_explain(certificate),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
