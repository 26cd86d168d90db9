//! Command-line surface. `run` parses arguments, does the work and returns the
//! process exit code: 0 success, 1 usage, 2 data or validation, 3 non-convergence.

use crate::error::{invalid, ModelError, Result};
use crate::estimation::{
    benefit_table, estimate_all, parameter_table, BartikOptions, CityPanel, EstimationOptions, Estimates,
    LocationOptions, MarriageOptions, Weighting, ZeroCellPolicy,
};
use crate::experiments::{
    run_scenario, scenario_by_name, scenario_catalog, welfare_columns, ScenarioContext, ScenarioMetrics,
    ScenarioOutcome, ScenarioSpec, WelfareColumn,
};
use crate::io::files::{
    load_city_panel, read_json, render_equilibrium, render_micro, render_panel, render_rows, num,
    Table, INDUSTRY_FILE, NATIONAL_WAGE_FILE, PANEL_FILE,
};
use crate::io::manifest::{FileDigest, LabeledResiduals, Manifest, OutputDir};
use crate::io::micro::{panel_from_micro, simulate_micro};
use crate::io::synth::{generate_synthetic_periods, industry_rows, synthetic_panel, tight_solver, SyntheticSpec};
use crate::model::{validate_economy, EconomyPrimitives, EquilibriumState};
use crate::spatial_eq::{equilibrium_residuals, solve_equilibrium, SolverOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const THREADS_ENV: &str = "SPMARRIAGE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroCells {
    Correct,
    Always,
    Never,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every stochastic output.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Outer solver tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write solver iterations to trace.jsonl.
    #[arg(long, global = true)]
    pub trace: bool,
}

#[derive(Debug, Parser)]
#[command(name = "spmarriage", version, about = "Spatial equilibrium with local marriage markets")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an economy JSON or a panel directory.
    Validate {
        path: PathBuf,
        #[arg(long)]
        base_period: Option<i32>,
    },
    /// Solve an economy and report residuals.
    Solve {
        economy: PathBuf,
        /// Solve with marriage unavailable.
        #[arg(long)]
        no_marriage: bool,
    },
    /// Estimate parameters from a panel directory.
    Estimate(EstimateArgs),
    /// Run named scenarios or a scenario spec file.
    Scenario(ScenarioArgs),
    /// Metric reports for a solved state.
    Metrics {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Generate synthetic economies, panels and micro records.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    panel: PathBuf,
    #[arg(long)]
    base_period: Option<i32>,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    reference_city: Option<String>,
    #[arg(long)]
    no_leave_one_out: bool,
    #[arg(long)]
    two_step: bool,
    #[arg(long, value_enum, default_value_t = ZeroCells::Correct)]
    zero_cells: ZeroCells,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Catalog names; `welfare_decomposition` runs all six welfare columns.
    #[arg(long = "name")]
    names: Vec<String>,
    /// Scenario spec JSON holding its own base and target economies.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    base: Option<PathBuf>,
    /// Defaults to the base economy.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Print the catalog and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// SyntheticSpec JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    cities: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
    /// Micro records per person type and period.
    #[arg(long)]
    micro: Option<u64>,
    /// Solve every period and write the panel files.
    #[arg(long)]
    panel: bool,
    /// Aggregate the panel from micro records instead of exact masses.
    #[arg(long)]
    micro_panel: bool,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub solver: SolverOptions,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl RunConfig {
    fn from_args(g: &GlobalArgs) -> Result<Self> {
        let mut solver = SolverOptions {
            trace: g.trace,
            ..SolverOptions::default()
        };
        if let Some(t) = g.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!("--tol must be positive, got {t}")));
            }
            solver.tol_outer = t;
        }
        if g.threads == Some(0) {
            return Err(invalid("--threads must be at least 1"));
        }
        Ok(RunConfig {
            seed: g.seed,
            threads: g.threads,
            solver,
            out_dir: g.out_dir.clone(),
            format: g.format,
        })
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            solver: self.solver,
            inputs: Vec::new(),
            outputs: Vec::new(),
            residuals: Vec::new(),
            spec_hashes: Vec::new(),
        }
    }
}

pub fn exit_code(e: &ModelError) -> i32 {
    match e {
        ModelError::NonConvergence { .. } => 3,
        _ => 2,
    }
}

/// Runs one command line and returns its exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let result = RunConfig::from_args(&cli.global).and_then(|cfg| with_threads(&cfg, || dispatch(&cli.command, &cfg)));
    match result {
        Ok((code, report)) => {
            let _ = write!(stdout, "{report}");
            code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| invalid(format!("cannot start {} worker threads: {e}", cfg.threads.unwrap_or(0))))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R>(_cfg: &RunConfig, f: impl FnOnce() -> Result<R>) -> Result<R> {
    f()
}

/// Runs a command; the report is printed by the caller.
fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<(i32, String)> {
    let mut report = String::new();
    let code = match cmd {
        Command::Validate { path, base_period } => validate(path, *base_period, &mut report)?,
        Command::Solve { economy, no_marriage } => solve(economy, *no_marriage, cfg, &mut report)?,
        Command::Estimate(a) => estimate(a, cfg, &mut report)?,
        Command::Scenario(a) => scenario(a, cfg, &mut report)?,
        Command::Metrics { economy, state } => metrics(economy, state, cfg, &mut report)?,
        Command::Synth(a) => synth(a, cfg, &mut report)?,
    };
    Ok((code, report))
}

fn require_exists(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(ModelError::Io {
                path: p.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input does not exist"),
            });
        }
    }
    Ok(())
}

fn load_economy(path: &Path) -> Result<EconomyPrimitives> {
    let econ: EconomyPrimitives = read_json(path)?;
    let violations = validate_economy(&econ);
    if violations.is_empty() {
        Ok(econ)
    } else {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(invalid(format!("{}: {}", path.display(), text.join("; "))))
    }
}

/// Panel directory, or the directory of a panel.csv path.
fn panel_dir(path: &Path) -> &Path {
    if path.is_dir() {
        path
    } else {
        path.parent().unwrap_or(Path::new("."))
    }
}

fn panel_inputs(dir: &Path) -> Result<Vec<FileDigest>> {
    [PANEL_FILE, INDUSTRY_FILE, NATIONAL_WAGE_FILE]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .map(|p| FileDigest::of_file(&p))
        .collect()
}

fn validate(path: &Path, base_period: Option<i32>, report: &mut String) -> Result<i32> {
    require_exists(&[path])?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let violations: Vec<String> = if is_json {
        let econ: EconomyPrimitives = read_json(path)?;
        validate_economy(&econ).iter().map(|v| v.to_string()).collect()
    } else {
        let mut panel = load_city_panel(panel_dir(path))?;
        panel.canonicalize();
        panel.validate(base_period).iter().map(|v| v.to_string()).collect()
    };
    if violations.is_empty() {
        report.push_str(&format!("{}: ok\n", path.display()));
        Ok(0)
    } else {
        Err(invalid(format!(
            "{}: {} problem(s)\n  {}",
            path.display(),
            violations.len(),
            violations.join("\n  ")
        )))
    }
}

fn residual_lines(label: &str, state: &EquilibriumState, recomputed: &crate::model::Residuals) -> String {
    format!(
        "{label}: converged={} iterations={}\n  labor {:.3e}\n  housing {:.3e}\n  marriage {:.3e}\n  location {:.3e}\n  population {:.3e}\n",
        state.converged,
        state.iterations,
        recomputed.labor,
        recomputed.housing,
        recomputed.marriage,
        recomputed.location,
        recomputed.population
    )
}

fn write_trace(out: &mut OutputDir, states: &[&EquilibriumState]) -> Result<()> {
    let mut text = String::new();
    for s in states {
        for r in &s.trace {
            #[derive(Serialize)]
            struct Line<'a> {
                period: &'a str,
                #[serde(flatten)]
                record: &'a crate::model::TraceRecord,
            }
            text.push_str(&serde_json::to_string(&Line { period: &s.period_label, record: r }).expect("trace serializes"));
            text.push('\n');
        }
    }
    out.write("trace.jsonl", &text)
}

fn solve(path: &Path, no_marriage: bool, cfg: &RunConfig, report: &mut String) -> Result<i32> {
    require_exists(&[path])?;
    let econ = load_economy(path)?;
    let opts = SolverOptions {
        marriage_feasible: !no_marriage,
        ..cfg.solver
    };
    let state = solve_equilibrium(&econ, &opts)?;
    let recomputed = equilibrium_residuals(&econ, &state)?;
    let mut out = OutputDir::new(&cfg.out_dir);
    match cfg.format {
        Format::Csv => {
            out.write("equilibrium.csv", &render_equilibrium(&state))?;
            out.write_json("state.json", &state)?;
        }
        Format::Json => out.write_json("equilibrium.json", &state)?,
    }
    out.write_json("residuals.json", &recomputed)?;
    if cfg.solver.trace {
        write_trace(&mut out, &[&state])?;
    }
    let mut m = cfg.manifest("solve");
    m.solver = opts;
    m.inputs.push(FileDigest::of_file(path)?);
    m.residuals.push(LabeledResiduals {
        label: state.period_label.clone(),
        converged: state.converged,
        iterations: state.iterations,
        residuals: recomputed,
    });
    out.finish(m)?;
    report.push_str(&residual_lines(&state.period_label, &state, &recomputed));
    if state.converged {
        Ok(0)
    } else {
        Err(ModelError::NonConvergence {
            what: format!("equilibrium of {}", path.display()),
            iterations: state.iterations,
            residual: state.residuals.max(),
        })
    }
}

fn table_file<T: Serialize>(out: &mut OutputDir, format: Format, stem: &str, rows: &[T]) -> Result<()> {
    match format {
        Format::Csv => out.write(&format!("{stem}.csv"), &render_rows(rows)?),
        Format::Json => out.write_json(&format!("{stem}.json"), &rows),
    }
}

fn estimation_options(a: &EstimateArgs) -> EstimationOptions {
    let d = EstimationOptions::default();
    EstimationOptions {
        base_period: a.base_period,
        zeta: a.zeta.unwrap_or(d.zeta),
        bartik: BartikOptions {
            leave_one_out: !a.no_leave_one_out,
        },
        marriage: MarriageOptions {
            chi: a.chi.unwrap_or(d.marriage.chi),
            zero_cells: match a.zero_cells {
                ZeroCells::Correct => ZeroCellPolicy::CorrectZeroCells,
                ZeroCells::Always => ZeroCellPolicy::Always,
                ZeroCells::Never => ZeroCellPolicy::Never,
            },
            weighting: if a.two_step { Weighting::TwoStep } else { Weighting::Identity },
            ..d.marriage
        },
        location: LocationOptions {
            reference_city: a.reference_city.clone(),
            ..d.location
        },
    }
}

fn estimate(a: &EstimateArgs, cfg: &RunConfig, report: &mut String) -> Result<i32> {
    require_exists(&[&a.panel])?;
    let dir = panel_dir(&a.panel);
    let panel = load_city_panel(dir)?;
    let opts = estimation_options(a);
    let est = estimate_all(&panel, &opts)?;
    let mut out = OutputDir::new(&cfg.out_dir);
    out.write_json("estimates.json", &est)?;
    let params = parameter_table(&est);
    table_file(&mut out, cfg.format, "parameters", &params)?;
    table_file(&mut out, cfg.format, "benefits", &benefit_table(&est.marriage))?;
    table_file(&mut out, cfg.format, "technology", &est.technology)?;
    write_amenities(&mut out, cfg.format, &est)?;
    let mut m = cfg.manifest("estimate");
    m.inputs = panel_inputs(dir)?;
    out.finish(m)?;
    for p in &params {
        report.push_str(&format!("{:<10} {:>14.6} ({:.6})\n", p.parameter, p.estimate, p.se));
    }
    for note in estimate_notes(&est) {
        report.push_str(&format!("note: {note}\n"));
    }
    Ok(0)
}

fn estimate_notes(est: &Estimates) -> Vec<String> {
    let mut notes = Vec::new();
    if est.labor.boundary {
        notes.push(format!("labor demand estimate {} is outside (0, 1); technology not recovered", est.labor.rho));
    }
    if est.labor.fit.weak_instruments {
        notes.push("labor demand first stage is weak".into());
    }
    if est.marriage.objective_flag {
        notes.push(format!("marriage objective {:.3e} exceeds its threshold", est.marriage.objective));
    }
    notes
}

fn write_amenities(out: &mut OutputDir, format: Format, est: &Estimates) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        city_id: &'a str,
        period: i32,
        #[serde(rename = "MH")]
        mh: f64,
        #[serde(rename = "ML")]
        ml: f64,
        #[serde(rename = "FH")]
        fh: f64,
        #[serde(rename = "FL")]
        fl: f64,
    }
    let rows: Vec<Row> = est
        .location
        .amenities
        .iter()
        .map(|a| Row {
            city_id: &a.city_id,
            period: a.period,
            mh: a.amenity.mh,
            ml: a.amenity.ml,
            fh: a.amenity.fh,
            fl: a.amenity.fl,
        })
        .collect();
    table_file(out, format, "amenities", &rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One table per metric family.
pub fn metric_tables(m: &ScenarioMetrics) -> Vec<(&'static str, Table)> {
    let mut ineq = Table::new(&["scope", "city_id", "gini"]);
    ineq.push(vec!["national".into(), String::new(), num(m.inequality.national)]);
    ineq.push(vec!["local_mean".into(), String::new(), num(m.inequality.local_mean)]);
    ineq.push(vec!["local_mean_weighted".into(), String::new(), num(m.inequality.local_mean_weighted)]);
    ineq.push(vec!["local_std".into(), String::new(), num(m.inequality.local_std)]);
    for (id, g) in &m.inequality.local {
        ineq.push(vec!["city".into(), id.clone(), num(*g)]);
    }

    let a = &m.assortativeness;
    let mut assort = Table::new(&["scope", "city_id", "surplus_core", "likelihood_ratio", "correlation", "married"]);
    assort.push(vec!["national".into(), String::new(), num(a.core_national), opt(a.lr_national), opt(a.correlation_national), String::new()]);
    assort.push(vec!["local".into(), String::new(), num(a.core_local), opt(a.lr_local), opt(a.correlation_local), String::new()]);
    for c in &a.cities {
        assort.push(vec![
            "city".into(),
            c.city_id.clone(),
            num(c.surplus_core),
            opt(c.likelihood_ratio),
            opt(c.correlation),
            num(c.married),
        ]);
    }

    let mut gap = Table::new(&["scope", "city_id", "male", "female"]);
    gap.push(vec!["national".into(), String::new(), num(m.marital_gap.national.male), num(m.marital_gap.national.female)]);
    for (id, g) in &m.marital_gap.local {
        gap.push(vec!["city".into(), id.clone(), num(g.male), num(g.female)]);
    }

    let mut welfare = Table::new(&["male", "female", "pooled"]);
    welfare.push(vec![num(m.welfare.male), num(m.welfare.female), num(m.welfare.pooled)]);

    let mut shares = Table::new(&["college_share_iqr"]);
    shares.push(vec![num(m.college_share_iqr)]);

    vec![
        ("inequality", ineq),
        ("assortativeness", assort),
        ("marital_gap", gap),
        ("welfare", welfare),
        ("college_shares", shares),
    ]
}

fn write_metrics(out: &mut OutputDir, prefix: &str, format: Format, m: &ScenarioMetrics) -> Result<()> {
    match format {
        Format::Csv => {
            for (name, t) in metric_tables(m) {
                out.write(&format!("{prefix}{name}.csv"), &t.render())?;
            }
            out.write(&format!("{prefix}metrics.csv"), &render_rows(&m.rows)?)
        }
        Format::Json => out.write_json(&format!("{prefix}metrics.json"), m),
    }
}

fn welfare_table(cols: &[WelfareColumn]) -> Table {
    let mut t = Table::new(&[
        "column",
        "toggles",
        "base_male",
        "base_female",
        "base_pooled",
        "scenario_male",
        "scenario_female",
        "scenario_pooled",
        "change_male",
        "change_female",
        "change_pooled",
    ]);
    for c in cols {
        t.push(vec![
            c.column.to_string(),
            c.toggles.join("+"),
            num(c.base_gap.male),
            num(c.base_gap.female),
            num(c.base_gap.pooled),
            num(c.scenario_gap.male),
            num(c.scenario_gap.female),
            num(c.scenario_gap.pooled),
            num(c.change.male),
            num(c.change.female),
            num(c.change.pooled),
        ]);
    }
    t
}

fn write_outcome(out: &mut OutputDir, o: &ScenarioOutcome, format: Format, m: &mut Manifest) -> Result<()> {
    let prefix = format!("{}/", o.provenance.scenario);
    match format {
        Format::Csv => out.write(&format!("{prefix}equilibrium.csv"), &render_equilibrium(&o.equilibrium))?,
        Format::Json => out.write_json(&format!("{prefix}equilibrium.json"), &o.equilibrium)?,
    }
    out.write_json(&format!("{prefix}provenance.json"), &o.provenance)?;
    write_metrics(out, &prefix, format, &o.metrics)?;
    m.spec_hashes.push((o.provenance.scenario.clone(), o.provenance.spec_hash.clone()));
    m.residuals.push(LabeledResiduals {
        label: o.provenance.scenario.clone(),
        converged: o.equilibrium.converged,
        iterations: o.equilibrium.iterations,
        residuals: o.equilibrium.residuals,
    });
    Ok(())
}

fn scenario(a: &ScenarioArgs, cfg: &RunConfig, report: &mut String) -> Result<i32> {
    if a.list {
        for t in scenario_catalog() {
            report.push_str(&t.name);
            report.push('\n');
        }
        report.push_str("welfare_decomposition\nassortativeness_scale(<factor>)\n");
        return Ok(0);
    }
    let mut m = cfg.manifest("scenario");
    let mut out = OutputDir::new(&cfg.out_dir);
    if let Some(spec_path) = &a.spec {
        require_exists(&[spec_path])?;
        let spec: ScenarioSpec = read_json(spec_path)?;
        m.inputs.push(FileDigest::of_file(spec_path)?);
        let o = run_scenario(&spec, &cfg.solver)?;
        write_outcome(&mut out, &o, cfg.format, &mut m)?;
        report.push_str(&format!("{}: national gini {}\n", o.provenance.scenario, num(o.metrics.inequality.national)));
    }
    if !a.names.is_empty() {
        let base_path = a
            .base
            .as_ref()
            .ok_or_else(|| invalid("--name needs --base <economy.json>"))?;
        let mut inputs: Vec<&Path> = vec![base_path];
        if let Some(t) = &a.target {
            inputs.push(t);
        }
        require_exists(&inputs)?;
        let base = load_economy(base_path)?;
        let target = match &a.target {
            Some(t) => load_economy(t)?,
            None => base.clone(),
        };
        for p in inputs {
            m.inputs.push(FileDigest::of_file(p)?);
        }
        // fail on unknown names before solving anything
        let templates: Vec<_> = a
            .names
            .iter()
            .map(|n| if n == "welfare_decomposition" { Ok(None) } else { scenario_by_name(n).map(Some) })
            .collect::<Result<_>>()?;
        let ctx = ScenarioContext::new(&base, &target, &cfg.solver)?;
        for (name, t) in a.names.iter().zip(templates) {
            match t {
                None => {
                    let cols = welfare_columns(&ctx, &[1, 2, 3, 4, 5, 6])?;
                    out.write(&format!("{name}/welfare_columns.csv"), &welfare_table(&cols).render())?;
                    report.push_str(&format!("{name}: 6 columns\n"));
                }
                Some(t) => {
                    let o = ctx.run(&t)?;
                    write_outcome(&mut out, &o, cfg.format, &mut m)?;
                    if let Some(k) = t.name.strip_prefix("welfare_columns_").and_then(|k| k.parse().ok()) {
                        let cols = welfare_columns(&ctx, &[k])?;
                        out.write(&format!("{}/welfare_columns.csv", t.name), &welfare_table(&cols).render())?;
                    }
                    report.push_str(&format!("{}: national gini {}\n", t.name, num(o.metrics.inequality.national)));
                }
            }
        }
    }
    if a.spec.is_none() && a.names.is_empty() {
        return Err(invalid("scenario needs --name, --spec or --list"));
    }
    out.finish(m)?;
    Ok(0)
}

fn metrics(econ_path: &Path, state_path: &Path, cfg: &RunConfig, report: &mut String) -> Result<i32> {
    require_exists(&[econ_path, state_path])?;
    if state_path.extension().is_some_and(|e| e == "csv") {
        return Err(invalid(format!(
            "{}: metrics need the lossless state JSON (state.json from solve)",
            state_path.display()
        )));
    }
    let econ = load_economy(econ_path)?;
    let state: EquilibriumState = read_json(state_path)?;
    let mut econ_sorted = econ.clone();
    econ_sorted.canonicalize();
    let ids: Vec<&str> = state.cities.iter().map(|c| c.city_id.as_str()).collect();
    let econ_ids: Vec<&str> = econ_sorted.cities.iter().map(|c| c.city_id.as_str()).collect();
    if ids != econ_ids {
        return Err(invalid(format!(
            "{} and {} list different cities",
            econ_path.display(),
            state_path.display()
        )));
    }
    let m = crate::experiments::scenario_metrics(&econ_sorted, &state)?;
    let mut out = OutputDir::new(&cfg.out_dir);
    write_metrics(&mut out, "", cfg.format, &m)?;
    let mut man = cfg.manifest("metrics");
    man.inputs = vec![FileDigest::of_file(econ_path)?, FileDigest::of_file(state_path)?];
    out.finish(man)?;
    report.push_str(&format!(
        "national gini {}\nlocal mean gini {}\ncollege share IQR {}\n",
        num(m.inequality.national),
        num(m.inequality.local_mean),
        num(m.college_share_iqr)
    ));
    Ok(0)
}

fn synth(a: &SynthArgs, cfg: &RunConfig, report: &mut String) -> Result<i32> {
    let mut spec = match &a.spec {
        Some(p) => {
            require_exists(&[p])?;
            read_json(p)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(n) = a.cities {
        spec.n_cities = n;
    }
    if let Some(t) = a.periods {
        spec.n_periods = t;
    }
    if let Some(n) = a.micro {
        spec.n_micro_draws = n as usize;
    }
    if a.micro_panel && spec.n_micro_draws == 0 {
        return Err(invalid("--micro-panel needs --micro <draws per type>"));
    }
    let periods = generate_synthetic_periods(&spec, cfg.seed)?;
    let mut out = OutputDir::new(&cfg.out_dir);
    let mut m = cfg.manifest("synth");
    if let Some(p) = &a.spec {
        m.inputs.push(FileDigest::of_file(p)?);
    }
    out.write_json("synthetic_spec.json", &spec)?;
    out.write_json("economy.json", &periods.economies[0])?;
    if periods.economies.len() > 1 {
        out.write_json("economy_target.json", periods.economies.last().expect("non-empty"))?;
        out.write_json("economies.json", &periods.economies)?;
    }
    report.push_str(&format!(
        "{} cities, {} period(s), seed {}\n",
        spec.n_cities, spec.n_periods, cfg.seed
    ));

    let needs_states = a.panel || spec.n_micro_draws > 0;
    if needs_states {
        let solver = SolverOptions {
            trace: cfg.solver.trace,
            ..tight_solver()
        };
        m.solver = solver;
        let sp = synthetic_panel(&periods, &solver)?;
        for (e, s) in sp.economies.iter().zip(&sp.states) {
            let r = equilibrium_residuals(e, s)?;
            m.residuals.push(LabeledResiduals {
                label: s.period_label.clone(),
                converged: s.converged,
                iterations: s.iterations,
                residuals: r,
            });
        }
        let mut micro_rows = Vec::new();
        if spec.n_micro_draws > 0 {
            for (t, (e, s)) in sp.economies.iter().zip(&sp.states).enumerate() {
                // each period draws from its own seed offset
                let recs = simulate_micro(e, s, spec.n_micro_draws as u64, cfg.seed.wrapping_add(t as u64))?;
                out.write(&format!("micro_{}.csv", e.period_label), &render_micro(&recs))?;
                if a.micro_panel {
                    micro_rows.extend(panel_from_micro(&recs, e, s)?.rows);
                }
            }
        }
        if a.panel || a.micro_panel {
            let panel = if a.micro_panel {
                let (industry, national_wages) = industry_rows(&periods.industry, &sp.economies, &sp.states)?;
                let mut p = CityPanel {
                    rows: micro_rows,
                    industry,
                    national_wages,
                };
                p.canonicalize();
                p
            } else {
                sp.panel.clone()
            };
            let (core, ind, nat) = render_panel(&panel);
            out.write(PANEL_FILE, &core)?;
            out.write(INDUSTRY_FILE, &ind)?;
            out.write(NATIONAL_WAGE_FILE, &nat)?;
            report.push_str(&format!("panel: {} rows\n", panel.rows.len()));
        }
        if cfg.solver.trace {
            let refs: Vec<&EquilibriumState> = sp.states.iter().collect();
            write_trace(&mut out, &refs)?;
        }
    }
    out.finish(m)?;
    Ok(0)
}
