use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flex_core::report::{compare_csv, json_document, rank_csv, Provenance};
use flex_core::{
    build_system, center, check_certificate, compare_designs, component_rank_map, emit_dot, flexibility_index,
    rank_constraints, stochastic_flexibility, verify_solution, CenterMethod, FlexConfig, FlexError, GaussianSpec,
    LinearSystem, MonteCarlo, NetworkModel, UncertaintySetSpec,
};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

const DEFAULT_VERIFY_SAMPLES: usize = 10_000;
const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Parser)]
#[command(name = "flex", version, about = "Flexibility analysis of linear systems under uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Flexibility index with certificate and boundary verification.
    Index,
    /// Monte Carlo stochastic flexibility.
    Sf,
    /// Nominal point of the feasible region.
    Center,
    /// Limiting-constraint ranking.
    Rank,
    /// Side-by-side indices for several designs.
    Compare,
    /// Distribution networks.
    Network {
        #[command(subcommand)]
        command: NetworkCommand,
    },
}

#[derive(Subcommand)]
enum NetworkCommand {
    /// Write the linear system of a network.
    Build,
    /// Rank constraints and map them onto arcs and suppliers.
    Rank,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Args)]
struct Opts {
    /// System JSON; repeat for `compare`.
    #[arg(long, global = true)]
    system: Vec<PathBuf>,
    /// Uncertainty set JSON; repeat for `compare`.
    #[arg(long, global = true)]
    set: Vec<PathBuf>,
    /// Gaussian distribution JSON.
    #[arg(long, global = true)]
    dist: Option<PathBuf>,
    /// Network JSON (`network build`, `network rank`).
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Monte Carlo draws (`sf`, `compare`) or boundary samples (`index`).
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum number of ranking levels.
    #[arg(long, global = true, default_value_t = 10)]
    levels: usize,
    /// Center method: analytic, arithmetic or feasible.
    #[arg(long, global = true, default_value = "analytic")]
    method: CenterMethod,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Feasibility tolerance for certificates.
    #[arg(long, global = true, default_value = "1e-8")]
    tol_feas: f64,
    /// Relative optimality gap for branch and bound.
    #[arg(long, global = true, default_value = "1e-9")]
    tol_gap: f64,
    /// Slack bound of the active-set formulation.
    #[arg(long, global = true)]
    big_m: Option<f64>,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<FlexError> for Failure {
    fn from(e: FlexError) -> Self {
        Failure {
            code: if e.is_input_error() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<FlexError>() {
            Some(fe) => Failure {
                code: if fe.is_input_error() { 3 } else { 2 },
                message: format!("{e:#}"),
            },
            None => input(e),
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

/// Result that still has to be written, and whether the run is a failure.
struct Artifact {
    text: String,
    problems: Vec<String>,
}

impl Opts {
    fn config(&self) -> Result<FlexConfig, Failure> {
        if !(self.tol_feas.is_finite() && self.tol_feas > 0.0) {
            return Err(input("--tol-feas must be positive"));
        }
        if !(self.tol_gap.is_finite() && self.tol_gap >= 0.0) {
            return Err(input("--tol-gap must be nonnegative"));
        }
        if let Some(m) = self.big_m {
            if !(m.is_finite() && m > 0.0) {
                return Err(input("--big-m must be positive"));
            }
        }
        let mut cfg = FlexConfig {
            big_m: self.big_m,
            tol_feas: self.tol_feas,
            ..FlexConfig::default()
        };
        cfg.bnb.rel_gap = self.tol_gap;
        Ok(cfg)
    }

    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, self.seed, self.tol_feas, self.tol_gap, self.big_m)
    }

    fn one_system(&self) -> Result<LinearSystem, Failure> {
        match self.system.as_slice() {
            [p] => load_system(p),
            [] => Err(input("--system is required")),
            _ => Err(input("exactly one --system is expected")),
        }
    }

    fn one_set(&self) -> Result<UncertaintySetSpec, Failure> {
        match self.set.as_slice() {
            [p] => load_set(p),
            [] => Err(input("--set is required")),
            _ => Err(input("exactly one --set is expected")),
        }
    }

    fn dist(&self) -> Result<Option<GaussianSpec>, Failure> {
        self.dist
            .as_ref()
            .map(|p| {
                let raw: Value = load(p)?;
                Ok(GaussianSpec::from_json_str(&raw.to_string())?)
            })
            .transpose()
    }

    fn network(&self) -> Result<NetworkModel, Failure> {
        let p = self.network.as_ref().ok_or_else(|| input("--network is required"))?;
        let net: NetworkModel = load(p)?;
        net.validate()?;
        Ok(net)
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(input(format!(
                "--format {} is not available for this command",
                f.to_possible_value().expect("named").get_name()
            )))
        }
    }
}

/// Parse a JSON input, unwrapping a `{"provenance", "result"}` document
/// written by an earlier run.
fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| input(format!("{e:#}")))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if let Value::Object(map) = &mut value {
        if map.contains_key("provenance") {
            if let Some(inner) = map.remove("result") {
                value = inner;
            }
        }
    }
    serde_json::from_value(value).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<LinearSystem, Failure> {
    let raw: Value = load(path)?;
    Ok(LinearSystem::from_json_str(&raw.to_string())?)
}

fn load_set(path: &Path) -> Result<UncertaintySetSpec, Failure> {
    let raw: Value = load(path)?;
    Ok(UncertaintySetSpec::from_json_str(&raw.to_string())?)
}

fn design_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn with_header(comment: &str, prov: &Provenance, body: String) -> String {
    format!("{comment} {}\n{body}", prov.line())
}

fn index(o: &Opts) -> Result<Artifact, Failure> {
    o.format(Format::Json, &[Format::Json])?;
    let system = o.one_system()?;
    let set = o.one_set()?;
    let cfg = o.config()?;
    let sol = flexibility_index(&system, &set, &cfg)?;
    let cert = check_certificate(&system, &sol)?;
    let samples = o.samples.unwrap_or(DEFAULT_VERIFY_SAMPLES);
    let verification = verify_solution(&system, &sol, samples, o.seed)?;
    let mut problems = Vec::new();
    if sol.stats.node_limit_hit {
        problems.push(format!("node limit reached, gap {:.3e}", sol.stats.gap));
    }
    if !cert.passes() {
        problems.push("certificate check failed".into());
    }
    if !verification.passed() {
        problems.push(format!("{} boundary samples violate feasibility", verification.violations_at_f));
    }
    let result = json!({ "solution": sol, "certificate": cert, "verification": verification });
    Ok(Artifact {
        text: json_document(&o.provenance("index"), &result)?,
        problems,
    })
}

fn sf(o: &Opts) -> Result<Artifact, Failure> {
    let format = o.format(Format::Json, &[Format::Json, Format::Csv])?;
    let system = o.one_system()?;
    let dist = o.dist()?.ok_or_else(|| input("--dist is required"))?;
    let samples = o.samples.unwrap_or(DEFAULT_MC_SAMPLES);
    let est = stochastic_flexibility(&system, &dist, samples, o.seed)?;
    eprintln!("sampling: {:.3} s", est.elapsed_seconds);
    let prov = o.provenance("sf");
    let text = match format {
        Format::Csv => with_header(
            "#",
            &prov,
            format!(
                "estimate,half_width,samples,seed\n{},{},{},{}\n",
                flex_core::report::fmt_sig(est.estimate),
                flex_core::report::fmt_sig(est.half_width),
                est.samples,
                est.seed
            ),
        ),
        _ => json_document(&prov, &est)?,
    };
    Ok(Artifact { text, problems: vec![] })
}

fn center_cmd(o: &Opts) -> Result<Artifact, Failure> {
    o.format(Format::Json, &[Format::Json])?;
    let system = o.one_system()?;
    let c = center(&system, o.method)?;
    Ok(Artifact {
        text: json_document(&o.provenance("center"), &c)?,
        problems: vec![],
    })
}

fn rank(o: &Opts) -> Result<Artifact, Failure> {
    let format = o.format(Format::Json, &[Format::Json, Format::Csv])?;
    let system = o.one_system()?;
    let set = o.one_set()?;
    let r = rank_constraints(&system, &set, o.levels, &o.config()?)?;
    let prov = o.provenance("rank");
    let text = match format {
        Format::Csv => rank_csv(&prov, &r)?,
        _ => json_document(&prov, &r)?,
    };
    let problems = if r.node_limit_hit {
        vec!["node limit reached in at least one level".into()]
    } else {
        vec![]
    };
    Ok(Artifact { text, problems })
}

fn compare(o: &Opts) -> Result<Artifact, Failure> {
    let format = o.format(Format::Csv, &[Format::Json, Format::Csv])?;
    if o.system.is_empty() {
        return Err(input("at least one --system is required"));
    }
    let systems = o
        .system
        .iter()
        .map(|p| Ok((design_name(p), load_system(p)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let sets = o.set.iter().map(|p| load_set(p)).collect::<Result<Vec<_>, _>>()?;
    let dist = o.dist()?;
    let mc = dist.as_ref().map(|d| MonteCarlo {
        dist: d,
        samples: o.samples.unwrap_or(DEFAULT_MC_SAMPLES),
        seed: o.seed,
    });
    let rows = compare_designs(&systems, &sets, mc, &o.config()?)?;
    let mut problems = Vec::new();
    for r in &rows {
        for e in &r.indices {
            if let Some(msg) = &e.error {
                problems.push(format!("{} / {}: {msg}", r.design, e.set));
            }
        }
        if let Some(msg) = &r.sf_error {
            problems.push(format!("{} / SF: {msg}", r.design));
        }
    }
    let prov = o.provenance("compare");
    let text = match format {
        Format::Json => json_document(&prov, &rows)?,
        _ => compare_csv(&prov, &rows)?,
    };
    Ok(Artifact { text, problems })
}

fn network_build(o: &Opts) -> Result<Artifact, Failure> {
    o.format(Format::Json, &[Format::Json])?;
    let system = build_system(&o.network()?)?;
    Ok(Artifact {
        text: json_document(&o.provenance("network build"), &system)?,
        problems: vec![],
    })
}

fn network_rank(o: &Opts) -> Result<Artifact, Failure> {
    let format = o.format(Format::Json, &[Format::Json, Format::Csv, Format::Dot])?;
    let net = o.network()?;
    let system = build_system(&net)?;
    let set = o.one_set()?;
    let r = rank_constraints(&system, &set, o.levels, &o.config()?)?;
    let map = component_rank_map(&net, &r.levels)?;
    let prov = o.provenance("network rank");
    let text = match format {
        Format::Dot => with_header("//", &prov, emit_dot(&net, &map)),
        Format::Csv => rank_csv(&prov, &r)?,
        Format::Json => json_document(&prov, &json!({ "rank": r, "components": map }))?,
    };
    let problems = if r.node_limit_hit {
        vec!["node limit reached in at least one level".into()]
    } else {
        vec![]
    };
    Ok(Artifact { text, problems })
}

fn run(cli: &Cli) -> Result<Artifact, Failure> {
    let o = &cli.opts;
    match &cli.command {
        Command::Index => index(o),
        Command::Sf => sf(o),
        Command::Center => center_cmd(o),
        Command::Rank => rank(o),
        Command::Compare => compare(o),
        Command::Network { command } => match command {
            NetworkCommand::Build => network_build(o),
            NetworkCommand::Rank => network_rank(o),
        },
    }
}

fn write(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush().map_err(|e| anyhow!(e))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let outcome = run(&cli).and_then(|a| {
        write(cli.opts.out.as_deref(), &a.text).map_err(|e| input(format!("{e:#}")))?;
        Ok(a.problems)
    });
    eprintln!("time: {:.3} s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(problems) if problems.is_empty() => ExitCode::SUCCESS,
        Ok(problems) => {
            eprintln!("error: {}", problems.join("; "));
            ExitCode::from(2)
        }
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
