use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use heatlab::asymptotics::{
    coefficient_report, fit_expansion, geometric_coefficients, sample_series, FitOptions, MAX_FIT_CONDITION,
};
use heatlab::experiments::{run_suite, Suite};
use heatlab::heat::{
    content_cutoff_for, content_series, geometric_grid, heat_csv, pde_heat_content_oracle, PdeOptions,
    DEFAULT_POINTS_PER_DECADE, DEFAULT_TAIL_THRESHOLD, HEAT_CSV_HEADER,
};
use heatlab::manifold::{geometry_summary, validate_spec, ManifoldSpec};
use heatlab::spectral::dump::{format_real, json_string, spectrum_csv, spectrum_json};
use heatlab::spectral::{interval_spectrum, spectrum_of, Convention, PruferOptions};
use heatlab::{Error, HeatSeries, HeatValue, SeriesKind, SpectralResolution};

/// Dirichlet spectra, heat trace, heat content and heat invariants of simple manifolds.
///
/// Manifolds are read from JSON specs, e.g. {"type":"interval","a":0,"b":"pi"}.
/// Set HEATLAB_THREADS to cap the number of worker threads.
/// Exit status: 0 on success, 1 on a computation error or failed verification,
/// 2 on a usage error.
#[derive(Parser, Debug)]
#[command(name = "heatlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues with multiplicities (CSV or JSON).
    Spectrum(SpectrumArgs),
    /// Heat trace Σ e^{-tλ} on a geometric t-grid (CSV).
    HeatTrace(HeatArgs),
    /// Heat content Σ e^{-tλ} σ(1)² on a geometric t-grid (CSV).
    HeatContent(ContentArgs),
    /// Coefficient-formula values a_0…a_4 and β_0…β_4 (JSON).
    Invariants(InvariantsArgs),
    /// Least-squares fit of the small-t expansion (JSON).
    Fit(FitArgs),
    /// Run a verification suite: cover, isospectrality, referee, content, asymptotics.
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ConventionArg {
    Drift,
    #[value(name = "paper_literal", alias = "paper-literal")]
    PaperLiteral,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Drift => Convention::Drift,
            ConventionArg::PaperLiteral => Convention::PaperLiteral,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    Trace,
    Content,
}

#[derive(Args, Debug)]
struct Common {
    /// Manifold spec (JSON file).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Sector convention for warped products.
    #[arg(long, value_enum, default_value = "drift")]
    convention: ConventionArg,
    /// Output file, written atomically; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TimeGrid {
    /// Smallest time of the geometric grid.
    #[arg(long, default_value_t = 0.01)]
    tmin: f64,
    /// Largest time of the geometric grid.
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    /// Grid points per decade.
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_DECADE)]
    tpoints: usize,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
    /// Keep every eigenvalue up to this value.
    #[arg(long, conflicts_with = "count", required_unless_present = "count")]
    cutoff: Option<f64>,
    /// Keep the lowest levels until this many eigenvalues (with multiplicity) are listed.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct HeatArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: TimeGrid,
    /// Spectral cutoff; chosen from --tmin when omitted.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Largest accepted ratio of tail bound to value.
    #[arg(long, default_value_t = DEFAULT_TAIL_THRESHOLD)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct ContentArgs {
    #[command(flatten)]
    heat: HeatArgs,
    /// Also emit Crank–Nicolson oracle rows (kind pde_oracle, tail_bound holds the
    /// Richardson error) on this many panels; warped products and intervals only.
    #[arg(long, value_name = "PANELS")]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct InvariantsArgs {
    /// Manifold spec (JSON file).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Smallest fitting time.
    #[arg(long, default_value_t = 1e-4)]
    tmin: f64,
    /// Largest fitting time.
    #[arg(long, default_value_t = 0.1)]
    tmax: f64,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_DECADE)]
    tpoints: usize,
    /// Highest fitted order.
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Spectral cutoff; chosen from --tmin when omitted.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Largest accepted relative residual of the fit.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite name.
    suite: String,
    /// Suite config (JSON); missing fields take defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Computation(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::InvalidSpec(_)
            | Error::EmptyInterval { .. }
            | Error::MalformedGram(_)
            | Error::NonPositiveDefiniteGram { .. }
            | Error::FiberHasBoundary
            | Error::SpectrumMissingZero
            | Error::SpectrumNotSorted => Failure::Usage(e.into()),
            other => Failure::Computation(other.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type Outcome<T> = std::result::Result<T, Failure>;

fn read_json(path: &Path) -> Outcome<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(usage)?;
    serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display())).map_err(usage)
}

fn read_spec(path: &Path) -> Outcome<ManifoldSpec> {
    let spec: ManifoldSpec = serde_json::from_value(read_json(path)?)
        .with_context(|| format!("{} is not a manifold spec", path.display()))
        .map_err(usage)?;
    validate_spec(&spec)?;
    Ok(spec)
}

fn positive(name: &str, v: f64) -> Outcome<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(anyhow!("--{name} must be a positive number, got {v}")))
    }
}

/// Writes `text` to `out` through a temporary file in the same directory.
fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    let Some(path) = out else {
        return io::stdout().write_all(text.as_bytes()).context("cannot write to standard output").map_err(Failure::Computation);
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))
        .map_err(usage)?;
    tmp.write_all(text.as_bytes()).and_then(|_| tmp.as_file().sync_all()).context("write failed").map_err(Failure::Computation)?;
    tmp.persist(path).map_err(|e| Failure::Computation(anyhow!("cannot move output into {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn lowest_levels(spec: &ManifoldSpec, count: usize, convention: Convention) -> Outcome<SpectralResolution> {
    if count == 0 {
        return Err(usage(anyhow!("--count must be positive")));
    }
    if let ManifoldSpec::Interval(iv) = spec {
        return Ok(interval_spectrum(iv.length(), count));
    }
    let mut cutoff = 16.0;
    for _ in 0..40 {
        let res = spectrum_of(spec, cutoff, convention, &PruferOptions::default())?;
        if res.count() >= count {
            let mut seen = 0;
            let keep = res.levels.iter().take_while(|l| {
                let more = seen < count;
                seen += l.multiplicity;
                more
            });
            let last = keep.last().map(|l| l.value).unwrap_or(0.0);
            return Ok(res.truncated(last));
        }
        cutoff *= 2.0;
    }
    Err(Failure::Computation(anyhow!("could not reach {count} eigenvalues")))
}

fn spectrum(args: &SpectrumArgs) -> Outcome<()> {
    let spec = read_spec(&args.common.spec)?;
    let convention: Convention = args.common.convention.into();
    let res = match (args.cutoff, args.count) {
        (Some(c), _) => {
            if !(c.is_finite() && c >= 0.0) {
                return Err(usage(anyhow!("--cutoff must be a non-negative number, got {c}")));
            }
            spectrum_of(&spec, c, convention, &PruferOptions::default())?
        }
        (None, Some(n)) => lowest_levels(&spec, n, convention)?,
        (None, None) => unreachable!("clap requires one of --cutoff and --count"),
    };
    let warped = matches!(spec, ManifoldSpec::WarpedProduct { .. });
    let conv = warped.then_some(convention);
    let text = match args.format {
        Format::Csv => spectrum_csv(&res, conv),
        Format::Json => json_string(&spectrum_json(&res, conv)),
    };
    emit(args.common.out.as_deref(), &text)
}

fn time_grid(g: &TimeGrid) -> Outcome<Vec<f64>> {
    positive("tmin", g.tmin)?;
    positive("tmax", g.tmax)?;
    if g.tpoints == 0 {
        return Err(usage(anyhow!("--tpoints must be positive")));
    }
    Ok(geometric_grid(g.tmin, g.tmax, g.tpoints)?)
}

fn cutoff_for(cutoff: Option<f64>, tmin: f64) -> Outcome<f64> {
    match cutoff {
        Some(c) => positive("cutoff", c),
        None => Ok(content_cutoff_for(tmin, 1e-14)),
    }
}

fn heat_trace(args: &HeatArgs) -> Outcome<()> {
    let spec = read_spec(&args.common.spec)?;
    let ts = time_grid(&args.grid)?;
    let cutoff = cutoff_for(args.cutoff, args.grid.tmin)?;
    positive("tolerance", args.tolerance)?;
    let res = spectrum_of(&spec, cutoff, args.common.convention.into(), &PruferOptions::default())?;
    let series = HeatSeries::trace(&res, spec.dim());
    let values = series.evaluate_grid(&ts, Some(args.tolerance))?;
    emit(args.common.out.as_deref(), &heat_csv(&values, SeriesKind::Trace))
}

fn heat_content(args: &ContentArgs) -> Outcome<()> {
    let h = &args.heat;
    let spec = read_spec(&h.common.spec)?;
    let ts = time_grid(&h.grid)?;
    let cutoff = cutoff_for(h.cutoff, h.grid.tmin)?;
    positive("tolerance", h.tolerance)?;
    let convention: Convention = h.common.convention.into();
    let series = content_series(&spec, cutoff, convention)?;
    let values = series.evaluate_grid(&ts, Some(h.tolerance))?;
    let kind = if matches!(spec, ManifoldSpec::WarpedProduct { .. }) { SeriesKind::WeightedContent } else { SeriesKind::Content };
    let mut text = heat_csv(&values, kind);
    if let Some(nx) = args.grid {
        let (base, f, volume) = match &spec {
            ManifoldSpec::Interval(iv) => (*iv, heatlab::ScalarExpr::zero(), 1.0),
            ManifoldSpec::WarpedProduct { base, f, fiber } => (*base, f.clone(), geometry_summary(fiber)?.volume),
            _ => return Err(usage(anyhow!("--grid applies to intervals and warped products only"))),
        };
        let opts = PdeOptions { nx, steps: nx, ..PdeOptions::default() };
        let oracle: Vec<HeatValue> = ts
            .iter()
            .map(|&t| {
                pde_heat_content_oracle(base, &f, volume, t, &opts)
                    .map(|p| HeatValue { t, value: p.extrapolated, tail_bound: p.error_estimate })
            })
            .collect::<heatlab::Result<_>>()?;
        let rows = heat_csv(&oracle, SeriesKind::PdeOracle);
        text.push_str(rows.strip_prefix(HEAT_CSV_HEADER).unwrap_or(&rows).trim_start_matches('\n'));
    }
    emit(h.common.out.as_deref(), &text)
}

fn invariants(args: &InvariantsArgs) -> Outcome<()> {
    let spec = read_spec(&args.spec)?;
    let summary = geometry_summary(&spec)?;
    let coefficients = geometric_coefficients(&spec)?;
    let doc = json!({
        "spec": spec,
        "dim": summary.dim,
        "volume": summary.volume,
        "boundary_volume": summary.boundary_volume,
        "trace": coefficients.trace,
        "content": coefficients.content,
        "quadrature_error": coefficients.quadrature_error,
    });
    emit(args.out.as_deref(), &json_string(&doc))
}

fn fit(args: &FitArgs) -> Outcome<()> {
    let spec = read_spec(&args.common.spec)?;
    positive("tmin", args.tmin)?;
    positive("tmax", args.tmax)?;
    positive("tolerance", args.tolerance)?;
    let cutoff = cutoff_for(args.cutoff, args.tmin)?;
    let convention: Convention = args.common.convention.into();
    let (series, kind) = match args.kind {
        KindArg::Trace => {
            let res = spectrum_of(&spec, cutoff, convention, &PruferOptions::default())?;
            (HeatSeries::trace(&res, spec.dim()), SeriesKind::Trace)
        }
        KindArg::Content => (content_series(&spec, cutoff, convention)?, SeriesKind::Content),
    };
    let ts = geometric_grid(args.tmin, args.tmax, args.tpoints)?;
    let samples = sample_series(&series, &ts, DEFAULT_TAIL_THRESHOLD)?;
    let opts = FitOptions { order: args.order, residual_threshold: args.tolerance, max_condition: MAX_FIT_CONDITION };
    let fit = fit_expansion(&samples, spec.dim(), kind, &opts)?;
    let geometric = match geometric_coefficients(&spec) {
        Ok(g) => Some(if kind == SeriesKind::Trace { g.trace } else { g.content }),
        Err(Error::UnsupportedGeometry(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut report = coefficient_report(geometric.as_ref().map_or(&[][..], |g| &g[..]), &fit, &[]);
    report["spec"] = serde_json::to_value(&spec).unwrap_or(Value::Null);
    report["cutoff"] = json!(cutoff);
    let symbol = if kind == SeriesKind::Trace { "a" } else { "beta" };
    report["summary"] = json!(fit
        .coefficients
        .iter()
        .enumerate()
        .map(|(n, &c)| format!("{symbol}_{n} = {}", format_real(c)))
        .collect::<Vec<_>>());
    emit(args.common.out.as_deref(), &json_string(&report))
}

fn verify(args: &VerifyArgs) -> Outcome<()> {
    let suite: Suite = args.suite.parse()?;
    let config = match &args.config {
        Some(p) => Some(read_json(p)?),
        None => None,
    };
    let report = run_suite(suite, config.as_ref())?;
    emit(args.out.as_deref(), &json_string(&report))?;
    for c in report.checks.iter() {
        let status = match c.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        eprintln!("[{status}] {} = {}", c.quantity, format_real(c.observed));
    }
    eprintln!("{}: {:?} in {:.2}s", report.experiment, report.verdict, report.runtime_seconds);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Computation(anyhow!("{} check(s) failed", report.failures().len())))
    }
}

fn configure_threads() -> Outcome<()> {
    let Ok(raw) = std::env::var("HEATLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(anyhow!("HEATLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Computation(anyhow!("cannot configure the thread pool: {e}")))
}

fn run(cli: &Cli) -> Outcome<()> {
    configure_threads()?;
    match &cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::HeatTrace(a) => heat_trace(a),
        Command::HeatContent(a) => heat_content(a),
        Command::Invariants(a) => invariants(a),
        Command::Fit(a) => fit(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("heatlab: usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Computation(e)) => {
            eprintln!("heatlab: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
