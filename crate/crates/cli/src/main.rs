//! Command-line surface: pattern analysis, potential schedules, exact
//! laws, MCMC sampling, convergence tables and the self-verification
//! suite. Results go to stdout, diagnostics to stderr; identical flags
//! and seed produce byte-identical output.

mod table;

use std::fmt::Display;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ising_poisson::asymptotics::{check_hypotheses, Schedule};
use ising_poisson::gibbs_exact::{exact_law, CountMode};
use ising_poisson::lattice::{Norm, TorusLattice};
use ising_poisson::patterns::{LocalPattern, PatternReport, Potentials};
use ising_poisson::sampler::{run_chain, ChainConfig, InitState};
use ising_poisson::stats::{batch_means_stderr, convergence_table, empirical_distribution, Engine};
use ising_poisson::verify::{run as run_verify, Level};

use table::{Cell, Format, Table};

#[derive(Parser)]
#[command(
    name = "ising-poisson",
    version,
    about = "Ferromagnetic Ising model on lattice tori: local pattern analysis, exact Gibbs oracles, Glauber sampling, and Poisson-approximation diagnostics"
)]
struct Cli {
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Cap the worker threads (default: machine parallelism). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Tsv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Tsv => Format::Tsv,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    /// Pair potential grows at the matched rate b = -a/(2V).
    #[value(alias = "example34")]
    Matched,
    /// Constant pair potential (set with --b-fixed).
    FixedB,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Exact,
    Mcmc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one pattern: counts, perimeter, ball constants, weight,
    /// probability gap and maximality probability.
    Pattern(PatternCmd),
    /// Evaluate a potential schedule over a size grid and report the
    /// margin conditions and locality probabilities per size.
    Schedule(ScheduleCmd),
    /// Exact law of a pattern count by full-state enumeration.
    Exact(ExactCmd),
    /// Sample pattern counts with heat-bath dynamics.
    Sample(SampleCmd),
    /// Distance-to-Poisson table over a size grid.
    Converge(ConvergeCmd),
    /// Run the built-in invariant suites; nonzero exit on any failure.
    Verify(VerifyCmd),
}

#[derive(Args)]
struct LatticeFlags {
    /// Expected dimension; must match the pattern file when given.
    #[arg(long)]
    d: Option<usize>,
    /// Expected norm (integer or `inf`); must match the pattern file
    /// when given.
    #[arg(long)]
    p: Option<String>,
    /// Expected range; must match the pattern file when given.
    #[arg(long)]
    rho: Option<usize>,
}

#[derive(Args)]
struct PatternCmd {
    /// Pattern file.
    #[arg(long)]
    file: String,
    /// Magnetic field a.
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    /// Pair potential b (nonnegative).
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    /// Torus size (default: large enough that the local geometry is
    /// wrap-free).
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    lattice: LatticeFlags,
}

#[derive(Args)]
struct ScheduleCmd {
    #[arg(long)]
    file: String,
    /// Target expected occurrence count.
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum)]
    schedule: ScheduleArg,
    /// Constant pair potential for the fixed-b schedule.
    #[arg(long)]
    b_fixed: Option<f64>,
    /// Size grid start:stop:step (stop included when hit exactly), or a
    /// single size.
    #[arg(long)]
    n_grid: String,
    #[command(flatten)]
    lattice: LatticeFlags,
}

#[derive(Args)]
struct ExactCmd {
    #[arg(long)]
    file: String,
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    /// Report the upper count (positives only) instead of exact matches.
    #[arg(long)]
    upper: bool,
    #[command(flatten)]
    lattice: LatticeFlags,
}

#[derive(Args)]
struct SampleCmd {
    #[arg(long)]
    file: String,
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    #[arg(long)]
    sweeps: usize,
    /// Discarded sweeps (default: max(1000, 20 n)).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Sweeps between retained samples.
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    upper: bool,
    #[command(flatten)]
    lattice: LatticeFlags,
}

#[derive(Args)]
struct ConvergeCmd {
    #[arg(long)]
    file: String,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum)]
    schedule: ScheduleArg,
    #[arg(long)]
    b_fixed: Option<f64>,
    #[arg(long)]
    n_grid: String,
    #[arg(long, value_enum)]
    engine: EngineArg,
    /// Sweeps per chain (MCMC engine).
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    lattice: LatticeFlags,
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
    level: LevelArg,
}

/// Anything that stops a command: library errors, IO, bad flag
/// combinations. All map to exit code 2, except a broken output pipe,
/// which ends the run quietly.
struct CliError {
    message: String,
    broken_pipe: bool,
}

impl CliError {
    fn new(message: impl Display) -> Self {
        CliError {
            message: message.to_string(),
            broken_pipe: false,
        }
    }
}

impl From<ising_poisson::Error> for CliError {
    fn from(e: ising_poisson::Error) -> Self {
        CliError::new(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            broken_pipe: e.kind() == std::io::ErrorKind::BrokenPipe,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<ExitCode, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let format = cli.format.into();
    let result = match cli.command {
        Command::Pattern(cmd) => cmd_pattern(cmd, format),
        Command::Schedule(cmd) => cmd_schedule(cmd, format),
        Command::Exact(cmd) => cmd_exact(cmd, format),
        Command::Sample(cmd) => cmd_sample(cmd, format),
        Command::Converge(cmd) => cmd_converge(cmd, format),
        Command::Verify(cmd) => cmd_verify(cmd),
    };
    match result {
        Ok(code) => code,
        // downstream closed the pipe: stop without noise
        Err(e) if e.broken_pipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(2)
        }
    }
}

fn load_pattern(path: &str, flags: &LatticeFlags) -> Result<LocalPattern, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new(format!("{path}: {e}")))?;
    let pattern = LocalPattern::parse(&text)?;
    if let Some(d) = flags.d {
        if d != pattern.dim() {
            return Err(CliError::new(format!(
                "--d {d} does not match the pattern file (d = {})",
                pattern.dim()
            )));
        }
    }
    if let Some(p) = &flags.p {
        let norm: Norm = p.parse()?;
        if norm != pattern.norm() {
            return Err(CliError::new(format!(
                "--p {p} does not match the pattern file (p = {})",
                pattern.norm()
            )));
        }
    }
    if let Some(rho) = flags.rho {
        if rho != pattern.rho() {
            return Err(CliError::new(format!(
                "--rho {rho} does not match the pattern file (rho = {})",
                pattern.rho()
            )));
        }
    }
    Ok(pattern)
}

fn lattice_for(pattern: &LocalPattern, n: usize) -> Result<TorusLattice, CliError> {
    let lattice = TorusLattice::new(n, pattern.dim(), pattern.norm(), pattern.rho())?;
    pattern.check_lattice(&lattice)?;
    Ok(lattice)
}

/// Parse `start:stop:step` (stop inclusive when hit) or a single size.
fn parse_grid(text: &str) -> Result<Vec<usize>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![single.parse().map_err(|_| {
            CliError::new(format!("bad size `{single}` in --n-grid"))
        })?]),
        [start, stop, step] => {
            let start: usize = start
                .parse()
                .map_err(|_| CliError::new(format!("bad start `{start}`")))?;
            let stop: usize = stop
                .parse()
                .map_err(|_| CliError::new(format!("bad stop `{stop}`")))?;
            let step: usize = step
                .parse()
                .map_err(|_| CliError::new(format!("bad step `{step}`")))?;
            if step == 0 {
                return Err(CliError::new("--n-grid step must be positive"));
            }
            if stop < start {
                return Err(CliError::new("--n-grid stop is below start"));
            }
            Ok((start..=stop).step_by(step).collect())
        }
        _ => Err(CliError::new(format!(
            "--n-grid must be `start:stop:step` or a single size, got `{text}`"
        ))),
    }
}

fn build_schedule(
    kind: ScheduleArg,
    b_fixed: Option<f64>,
    lambda: f64,
    pattern: &LocalPattern,
) -> Result<Schedule, CliError> {
    let bulk = TorusLattice::bulk_size(pattern.rho(), pattern.radius());
    let lattice = lattice_for(pattern, bulk)?;
    let (k, gamma) = pattern.stats(&lattice)?;
    let v = lattice.coordination();
    match kind {
        ScheduleArg::Matched => Ok(Schedule::matched_divergence(
            k,
            gamma,
            v,
            pattern.dim(),
            lambda,
        )?),
        ScheduleArg::FixedB => {
            let b = b_fixed.ok_or_else(|| CliError::new("--schedule fixed-b needs --b-fixed"))?;
            Ok(Schedule::fixed_b(k, gamma, v, pattern.dim(), lambda, b)?)
        }
    }
}

fn cmd_pattern(cmd: PatternCmd, format: Format) -> CmdResult {
    let pattern = load_pattern(&cmd.file, &cmd.lattice)?;
    let pot = Potentials::new(cmd.a, cmd.b)?;
    let n = cmd
        .n
        .unwrap_or_else(|| TorusLattice::bulk_size(pattern.rho(), pattern.radius()));
    let lattice = lattice_for(&pattern, n)?;
    let report = PatternReport::compute(&pattern, &pot, &lattice)?;
    if let Some(diag) = &report.gap_diagnostic {
        eprintln!("warning: {diag}");
    }
    let ball = lattice.ball(0, pattern.radius())?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut t = Table::new(&mut lock, format);
    t.header(&[
        "k",
        "gamma",
        "beta",
        "alpha",
        "v",
        "log_weight",
        "delta",
        "theta",
        "clean",
    ])?;
    t.row(&[
        Cell::UInt(report.k),
        Cell::UInt(report.gamma),
        Cell::UInt(ball.beta as u64),
        Cell::UInt(ball.alpha as u64),
        Cell::UInt(lattice.coordination() as u64),
        Cell::Real(report.log_weight),
        Cell::Real(report.delta),
        Cell::opt_real(report.theta),
        Cell::Bool(report.clean),
    ])?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_schedule(cmd: ScheduleCmd, format: Format) -> CmdResult {
    let pattern = load_pattern(&cmd.file, &cmd.lattice)?;
    let schedule = build_schedule(cmd.schedule, cmd.b_fixed, cmd.lambda, &pattern)?;
    let grid = parse_grid(&cmd.n_grid)?;
    let report = check_hypotheses(&schedule, &pattern, &grid)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut t = Table::new(&mut lock, format);
    t.header(&[
        "n",
        "a",
        "b",
        "a_plus_vb",
        "a_plus_2vb",
        "delta",
        "theta",
        "m",
        "h2",
        "in_regime",
        "h1_trend",
    ])?;
    for row in &report.rows {
        t.row(&[
            Cell::UInt(row.n as u64),
            Cell::Real(row.a),
            Cell::Real(row.b),
            Cell::Real(row.a_plus_vb),
            Cell::Real(row.a_plus_2vb),
            Cell::regime_real(row.delta),
            Cell::regime_real(row.theta),
            Cell::regime_real(row.m),
            Cell::Bool(row.h2),
            Cell::Bool(row.in_regime),
            Cell::Bool(report.h1_trend),
        ])?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_exact(cmd: ExactCmd, format: Format) -> CmdResult {
    let pattern = load_pattern(&cmd.file, &cmd.lattice)?;
    let pot = Potentials::new(cmd.a, cmd.b)?;
    let lattice = lattice_for(&pattern, cmd.n)?;
    let mode = if cmd.upper {
        CountMode::Upper
    } else {
        CountMode::ExactMatch
    };
    let law = exact_law(&lattice, &pot, &pattern, mode)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut t = Table::new(&mut lock, format);
    t.comment(&format!("log_z={:.16e}", law.log_z))?;
    t.comment(&format!("mean={:.16e}", law.mean))?;
    t.comment(&format!("variance={:.16e}", law.variance))?;
    t.comment(&format!(
        "second_factorial_moment={:.16e}",
        law.second_factorial_moment
    ))?;
    t.header(&["count", "probability"])?;
    for (m, &p) in law.pmf.iter().enumerate() {
        t.row(&[Cell::UInt(m as u64), Cell::Real(p)])?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(cmd: SampleCmd, format: Format) -> CmdResult {
    let pattern = load_pattern(&cmd.file, &cmd.lattice)?;
    let pot = Potentials::new(cmd.a, cmd.b)?;
    let lattice = lattice_for(&pattern, cmd.n)?;
    let config = ChainConfig {
        sweeps: cmd.sweeps,
        burn_in: cmd
            .burn_in
            .unwrap_or_else(|| ChainConfig::default_burn_in(cmd.n)),
        thin: cmd.thin,
        chains: cmd.chains,
        seed: cmd.seed,
        init: InitState::AllMinus,
    };
    config.validate()?;
    let samples = run_chain(&lattice, &pot, &pattern, &config)?;
    let counts: Vec<u64> = if cmd.upper {
        samples.iter().map(|&(_, u)| u).collect()
    } else {
        samples.iter().map(|&(x, _)| x).collect()
    };
    let dist = empirical_distribution(&counts)?;
    let stderr_mean = batch_means_stderr(&counts, 100.min(counts.len() / 2).max(2));
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut t = Table::new(&mut lock, format);
    t.comment(&format!("mean={:.16e}", dist.mean()))?;
    t.comment(&format!("variance={:.16e}", dist.variance()))?;
    match stderr_mean {
        Some(se) => t.comment(&format!("stderr_mean={se:.16e}"))?,
        None => t.comment("stderr_mean=na")?,
    }
    t.comment(&format!("samples={}", counts.len()))?;
    t.comment(&format!("chains={}", config.chains))?;
    t.header(&["count", "probability", "stderr"])?;
    let errs = dist
        .mc_stderr()
        .expect("empirical distributions carry stderr");
    for (m, (&p, &se)) in dist.pmf().iter().zip(errs).enumerate() {
        t.row(&[Cell::UInt(m as u64), Cell::Real(p), Cell::Real(se)])?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_converge(cmd: ConvergeCmd, format: Format) -> CmdResult {
    let pattern = load_pattern(&cmd.file, &cmd.lattice)?;
    let schedule = build_schedule(cmd.schedule, cmd.b_fixed, cmd.lambda, &pattern)?;
    let grid = parse_grid(&cmd.n_grid)?;
    let (engine, chain) = match cmd.engine {
        EngineArg::Exact => (Engine::Exact, None),
        EngineArg::Mcmc => {
            let sweeps = cmd
                .sweeps
                .ok_or_else(|| CliError::new("--engine mcmc needs --sweeps"))?;
            let max_n = *grid.iter().max().expect("grid nonempty");
            let config = ChainConfig {
                sweeps,
                burn_in: cmd
                    .burn_in
                    .unwrap_or_else(|| ChainConfig::default_burn_in(max_n)),
                thin: cmd.thin,
                chains: cmd.chains,
                seed: cmd.seed,
                init: InitState::AllMinus,
            };
            config.validate()?;
            (Engine::Mcmc, Some(config))
        }
    };
    let rows = convergence_table(&schedule, &pattern, &grid, engine, chain.as_ref())?;
    for &n in &grid {
        if !rows.iter().any(|r| r.n == n) {
            eprintln!("note: n = {n} is out of regime (a >= 0) and was skipped");
        }
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut t = Table::new(&mut lock, format);
    t.header(&[
        "n",
        "a",
        "b",
        "delta",
        "theta",
        "m",
        "lambda",
        "lambda_n",
        "d_tv_x",
        "d_tv_xbar",
        "sc_bound",
        "engine",
    ])?;
    for row in &rows {
        t.row(&[
            Cell::UInt(row.n as u64),
            Cell::Real(row.a),
            Cell::Real(row.b),
            Cell::Real(row.delta),
            Cell::Real(row.theta),
            Cell::Real(row.m),
            Cell::Real(row.lambda),
            Cell::opt_real(row.lambda_n),
            Cell::Real(row.d_tv_x),
            Cell::opt_real(row.d_tv_xbar),
            Cell::opt_real(row.sc_bound),
            Cell::Text(match row.engine {
                Engine::Exact => "exact".into(),
                Engine::Mcmc => "mcmc".into(),
            }),
        ])?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cmd: VerifyCmd) -> CmdResult {
    let level = match cmd.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let checks = run_verify(level);
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut failures = 0usize;
    for c in &checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        writeln!(lock, "{tag} {} ({})", c.name, c.detail)?;
        if !c.passed {
            failures += 1;
        }
    }
    writeln!(lock, "{} checks, {} failed", checks.len(), failures)?;
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
