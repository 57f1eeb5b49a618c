use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimar::dataset::{load_csv, Pattern, Schema};
use mimar::estimators::{format_fit_table, write_fit_csv, FitContext, FitResult, Registry};
use mimar::imputation::{build_donor_index, FallbackLevel, Method, Need};
use mimar::selection::{estimate_selection_probs, pattern_fractions};
use mimar::simulation::{
    format_metrics_text, format_re_text, re_table, run_replications, write_metrics_csv,
    write_re_csv, RunHeader, StudyConfig,
};
use mimar::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mimar",
    version,
    about = "MI, CC and IPW logistic regression with covariates missing at random"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit estimators to a CSV dataset.
    Fit(FitArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Dump selection probabilities, pattern frequencies and donor fallbacks.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VarianceChoice {
    Rubin,
    Proposed,
    Both,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// TOML file mapping columns to roles.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated estimator names (full, cc, sipw, mi1, mi2, mi1n, mi2n) or `all`.
    #[arg(long, value_delimiter = ',', default_value = "cc,sipw,mi1,mi2")]
    estimators: Vec<String>,
    /// Variance for `mi1`/`mi2`: Rubin-type, influence sandwich, or both.
    #[arg(long, value_enum, default_value = "both")]
    variance: VarianceChoice,
    #[arg(long, default_value_t = 15)]
    imputations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Coefficient table CSV; the text table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study config (TOML).
    #[arg(long, conflicts_with = "study", required_unless_present = "study")]
    config: Option<PathBuf>,
    /// Bundled study 1-4 instead of a config file.
    #[arg(long)]
    study: Option<usize>,
    /// Output directory for metrics.csv, re.csv and metrics.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Overrides the imputation count of every scenario.
    #[arg(long)]
    imputations: Option<usize>,
    /// Comma-separated estimator names or `all` (default: config list, else all).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "both")]
    variance: VarianceChoice,
    /// Run only the scenario with this label.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for selection.csv, patterns.csv and fallback.csv.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(2)
        }
    }
}

fn error_record(e: &Error) -> String {
    let row = e.row().map(|r| format!(" row={r}")).unwrap_or_default();
    let message = e
        .to_string()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    format!("error kind={}{row} message=\"{message}\"", e.kind())
}

/// Expands `mi1`/`mi2` into their Rubin and sandwich variants and drops
/// `full` from `all` when the data are incomplete.
fn expand_estimators(
    names: &[String],
    variance: VarianceChoice,
    fully_observed: bool,
) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut add = |s: &str| {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    };
    for name in names {
        let key = name.trim().to_ascii_lowercase();
        match key.as_str() {
            "all" => {
                if fully_observed {
                    add("full");
                }
                add("cc");
                add("sipw");
                for m in ["mi1", "mi2"] {
                    expand_mi(m, variance, &mut add);
                }
            }
            "mi1" | "mi2" => expand_mi(&key, variance, &mut add),
            _ => add(&key),
        }
    }
    out
}

fn expand_mi(name: &str, variance: VarianceChoice, add: &mut impl FnMut(&str)) {
    if variance != VarianceChoice::Proposed {
        add(name);
    }
    if variance != VarianceChoice::Rubin {
        add(&format!("{name}n"));
    }
}

fn write_file(path: &Path, contents: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    contents(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<bool> {
    let schema_text = fs::read_to_string(&args.data.schema)?;
    let schema = Schema::parse(&schema_text)?;
    let dataset = load_csv(&args.data.input, &schema)?;
    let registry = Registry::builtin();
    let names = expand_estimators(&args.estimators, args.variance, dataset.is_fully_observed());
    let estimators = registry.select(&names)?;
    let ctx = FitContext::new(&dataset, args.imputations, args.seed);

    let mut results: Vec<FitResult> = Vec::with_capacity(estimators.len());
    let mut all_converged = true;
    for e in estimators {
        let fit = e.fit(&ctx)?;
        if !fit.converged() {
            all_converged = false;
            eprintln!(
                "warning: {} did not converge ({})",
                fit.estimator,
                fit.report.failure.map_or("unknown", |f| f.describe())
            );
        }
        results.push(fit);
    }
    let coef_names = dataset.coefficient_names();
    let header = RunHeader::new(args.seed, &schema_text);
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{}", header.line())?;
    let counts = dataset.pattern_counts();
    writeln!(
        stdout,
        "n={} patterns={}/{}/{}/{} M={}",
        dataset.n(),
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        args.imputations
    )?;
    write!(stdout, "{}", format_fit_table(&results, &coef_names))?;
    if let Some(path) = &args.out {
        write_file(path, |buf| {
            writeln!(buf, "{}", header.line())?;
            write_fit_csv(&results, &coef_names, buf)
        })?;
    }
    Ok(all_converged)
}

fn cmd_simulate(args: SimulateArgs) -> Result<bool> {
    let (text, mut config) = match (&args.config, args.study) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)?;
            let cfg = StudyConfig::from_toml(&text)?;
            (text, cfg)
        }
        (None, Some(k)) => {
            let text = StudyConfig::preset_text(k)
                .ok_or_else(|| Error::InvalidArgument(format!("no bundled study {k}")))?;
            (text.to_string(), StudyConfig::from_toml(text)?)
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "either --config or --study is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(m) = args.imputations {
        config.imputations = m;
        for s in &mut config.scenarios {
            s.imputations = Some(m);
        }
    }
    config.validate()?;

    let requested = args
        .estimators
        .clone()
        .or_else(|| config.estimators.clone())
        .unwrap_or_else(|| vec!["all".to_string()]);
    let names = expand_estimators(&requested, args.variance, true);
    let registry = Registry::builtin();
    let estimators = registry.select(&names)?;

    let scenarios: Vec<_> = config
        .scenarios()
        .into_iter()
        .filter(|s| args.scenario.as_ref().is_none_or(|l| *l == s.label))
        .collect();
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no scenario labelled `{}`",
            args.scenario.unwrap_or_default()
        )));
    }

    let header = RunHeader::new(config.seed, &text);
    println!("{}", header.line());
    let mut tables = Vec::new();
    for s in &scenarios {
        let t = run_replications(&config, s, &estimators, args.workers)?;
        print!("{}", format_metrics_text(&t));
        tables.push(t);
    }
    let re: Vec<_> = tables.iter().map(re_table).collect();
    let coef_names = tables[0].coefficient_names.clone();
    for r in &re {
        print!("{}", format_re_text(r, &coef_names));
    }

    fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("metrics.csv"), |buf| {
        write_metrics_csv(&tables, &header, buf)
    })?;
    write_file(&args.out.join("re.csv"), |buf| {
        write_re_csv(&re, &coef_names, &header, buf)
    })?;
    write_file(&args.out.join("metrics.txt"), |buf| {
        writeln!(buf, "{}", header.line())?;
        for t in &tables {
            buf.extend_from_slice(format_metrics_text(t).as_bytes());
        }
        for r in &re {
            buf.extend_from_slice(format_re_text(r, &coef_names).as_bytes());
        }
        Ok(())
    })?;
    let flagged = tables.iter().any(|t| !t.warnings().is_empty());
    if flagged {
        eprintln!("warning: some estimators failed in more than 10% of replications");
    }
    Ok(!flagged)
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<bool> {
    let schema_text = fs::read_to_string(&args.data.schema)?;
    let schema = Schema::parse(&schema_text)?;
    let dataset = load_csv(&args.data.input, &schema)?;
    let header = RunHeader::new(0, &schema_text);
    fs::create_dir_all(&args.out)?;

    let table = estimate_selection_probs(&dataset);
    write_file(&args.out.join("selection.csv"), |buf| {
        writeln!(buf, "{}", header.line())?;
        table.write_csv(&dataset, buf)
    })?;

    let counts = dataset.pattern_counts();
    let fractions = pattern_fractions(&dataset);
    write_file(&args.out.join("patterns.csv"), |buf| {
        writeln!(buf, "{}", header.line())?;
        writeln!(buf, "pattern,count,fraction")?;
        for (k, (c, f)) in counts.iter().zip(fractions).enumerate() {
            writeln!(buf, "{},{c},{f:.6}", k + 1)?;
        }
        Ok(())
    })?;

    let index = build_donor_index(&dataset);
    let mut fallbacks = 0usize;
    write_file(&args.out.join("fallback.csv"), |buf| {
        writeln!(buf, "{}", header.line())?;
        writeln!(buf, "row,pattern,method,block,pool,level")?;
        for i in 0..dataset.n() {
            let pattern = dataset.record(i).pattern();
            let Some(need) = Need::for_pattern(pattern) else {
                continue;
            };
            for method in [Method::Mi1, Method::Mi2] {
                let res = index.resolve(&dataset, i, method, need)?;
                if res.provenance.level == FallbackLevel::Primary {
                    continue;
                }
                fallbacks += 1;
                let level = match res.provenance.level {
                    FallbackLevel::Stratum => "stratum",
                    _ => "outcome_only",
                };
                writeln!(
                    buf,
                    "{},{},{method},{},{},{level}",
                    i + 1,
                    pattern.code(),
                    need_name(need),
                    res.provenance.pool.name()
                )?;
            }
        }
        Ok(())
    })?;

    println!("{}", header.line());
    println!(
        "records {}  strata {}  fallbacks {}",
        dataset.n(),
        table.len(),
        fallbacks
    );
    for (p, (c, f)) in Pattern::ALL.iter().zip(counts.iter().zip(fractions)) {
        println!("pattern {}  {:>8}  {:.4}", p.code(), c, f);
    }
    Ok(true)
}

fn need_name(need: Need) -> &'static str {
    match need {
        Need::X1 => "x1",
        Need::X2 => "x2",
        Need::Both => "x1+x2",
    }
}
