//! The `drowsy` command line.
//!
//! Exit codes: 0 success, 1 parse error, 2 schema error, 3 non-monotonic
//! timestamps, 4 I/O error, 5 invalid scenario script, 64 usage error.

pub mod plot;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::detector::{Detector, DetectorConfig, DetectorError, DetectorOverrides, Event, EventKind};
use crate::eval::{self, match_alarms, run_detector_on_trace, run_frames, EvalError, DEFAULT_GRACE_S};
use crate::ingestion::{IngestError, Trace, TraceReader};
use crate::synth::table::{scenario_file_for_row, REFERENCE_TABLE};
use crate::synth::{LabelsFile, ScenarioFile, SynthError};
use plot::{render_svg, PlotRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Parse = 1,
    Schema = 2,
    NonMonotonic = 3,
    Io = 4,
    InvalidScript = 5,
    Usage = 64,
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn io(context: impl std::fmt::Display, err: io::Error) -> Self {
        Self::new(ExitStatus::Io, format!("{context}: {err}"))
    }
}

impl From<IngestError> for CliError {
    fn from(err: IngestError) -> Self {
        let status = match err {
            IngestError::Parse { .. } => ExitStatus::Parse,
            IngestError::Schema { .. } => ExitStatus::Schema,
            IngestError::Io(_) => ExitStatus::Io,
        };
        Self::new(status, err.to_string())
    }
}

fn detector_status(err: &DetectorError) -> ExitStatus {
    match err {
        DetectorError::NonMonotonicTimestamp { .. } | DetectorError::InvalidTimestamp(_) => ExitStatus::NonMonotonic,
        DetectorError::Geometry(_) | DetectorError::InvalidConfig(_) | DetectorError::EmptyWindow => ExitStatus::Schema,
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        let status = match err {
            SynthError::Io { .. } => ExitStatus::Io,
            _ => ExitStatus::InvalidScript,
        };
        Self::new(status, err.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Detector { ref source, .. } => Self::new(detector_status(source), err.to_string()),
            EvalError::Synth(e) => e.into(),
            EvalError::MissingScenario(_) => Self::new(ExitStatus::Io, err.to_string()),
            EvalError::ZeroTotal => Self::new(ExitStatus::Schema, err.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "drowsy",
    version,
    about = "Eye-closure drowsiness detection over landmark traces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Stream a trace through the detector, writing one event per line.
    Replay(ReplayArgs),
    /// Generate a labeled trace from a scenario file.
    Simulate(SimulateArgs),
    /// Score detector alarms against ground-truth episodes.
    Eval(EvalArgs),
    /// Write per-frame CSV (and optionally SVG) plot data for a trace.
    Plot(PlotArgs),
    /// Write the ten bundled accuracy-table scenario files.
    ExportScenarios {
        /// Output directory.
        dir: PathBuf,
    },
}

/// Detector settings. Flags override the `--config` file, which overrides
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct DetectorFlags {
    /// JSON file with any subset of the detector settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// EAR below this classifies the eye as closed [default 0.20].
    #[arg(long)]
    pub ear_threshold: Option<f64>,
    /// The alarm is on while the score exceeds this [default 10].
    #[arg(long)]
    pub score_threshold: Option<u32>,
    /// Score added per closed frame [default 1].
    #[arg(long)]
    pub score_increment: Option<u32>,
    /// Score removed per open frame [default 1].
    #[arg(long)]
    pub score_decrement: Option<u32>,
    /// Upper bound on the score [default 3 x score threshold].
    #[arg(long)]
    pub score_cap: Option<u32>,
    /// PERCLOS window in frames [default 90].
    #[arg(long)]
    pub perclos_window: Option<usize>,
    /// Consecutive no-face frames before they count as closed [default 15].
    #[arg(long)]
    pub no_face_limit: Option<u32>,
    /// Shortest closure reported as a blink, seconds [default 0.1].
    #[arg(long)]
    pub blink_min_s: Option<f64>,
    /// Longest closure reported as a blink, seconds [default 0.4].
    #[arg(long)]
    pub blink_max_s: Option<f64>,
    /// Expected frame rate [default 30].
    #[arg(long)]
    pub nominal_fps: Option<f64>,
}

impl DetectorFlags {
    fn flag_overrides(&self) -> DetectorOverrides {
        DetectorOverrides {
            ear_threshold: self.ear_threshold,
            score_threshold: self.score_threshold,
            score_increment: self.score_increment,
            score_decrement: self.score_decrement,
            score_cap: self.score_cap,
            perclos_window: self.perclos_window,
            no_face_limit: self.no_face_limit,
            blink_min_s: self.blink_min_s,
            blink_max_s: self.blink_max_s,
            nominal_fps: self.nominal_fps,
            eye_indices: None,
        }
    }

    /// Resolves defaults, then `base`, then the config file, then flags.
    pub fn resolve(&self, base: &DetectorOverrides) -> Result<DetectorConfig, CliError> {
        let mut layered = base.clone();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            let file: DetectorOverrides = serde_json::from_str(&text)
                .map_err(|e| CliError::new(ExitStatus::Schema, format!("{}: {e}", path.display())))?;
            layered = layered.merged_with(&file);
        }
        let config = layered.merged_with(&self.flag_overrides()).resolve();
        config
            .validate()
            .map_err(|e| CliError::new(ExitStatus::Schema, e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace file, or `-` for standard input (the default).
    #[arg(long, short, value_name = "PATH", conflicts_with = "listen")]
    pub input: Option<PathBuf>,
    /// Accept one TCP connection on this address and read the trace from it.
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<String>,
    /// Event sink; standard output when omitted.
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Shell command run (detached) on every AlarmOn.
    #[arg(long, value_name = "CMD")]
    pub on_alarm: Option<String>,
    /// Also write per-frame plot CSV here.
    #[arg(long, value_name = "PATH")]
    pub plot_output: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    /// Trace output; labels go to the same path with extension `.labels.json`.
    #[arg(long, short, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(required_unless_present = "table", conflicts_with = "table")]
    pub trace: Option<PathBuf>,
    /// Labels sidecar written by `simulate`.
    #[arg(long, required_unless_present = "table")]
    pub labels: Option<PathBuf>,
    /// Reproduce the ten-row accuracy table from the scenario files in DIR.
    #[arg(long, value_name = "DIR")]
    pub table: Option<PathBuf>,
    /// Seconds after an episode during which an alarm still counts.
    #[arg(long, default_value_t = DEFAULT_GRACE_S)]
    pub grace: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub trace: PathBuf,
    /// CSV output path.
    #[arg(long, short, value_name = "PATH")]
    pub out: PathBuf,
    /// Optional SVG chart of EAR and score.
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

/// Sidecar labels path for a trace written to `trace_path`.
pub fn labels_path_for(trace_path: &Path) -> PathBuf {
    trace_path.with_extension("labels.json")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path.display(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

/// Runs alarm hooks without waiting on them; children are reaped at the end.
struct AlarmHook {
    command: String,
    running: Vec<Child>,
}

impl AlarmHook {
    fn fire(&mut self, event: &Event, err: &mut dyn Write) {
        let spawned = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("DROWSY_EVENT_T", event.timestamp.to_string())
            .env("DROWSY_SCORE", event.score_at_event.to_string())
            .stdin(Stdio::null())
            .spawn();
        match spawned {
            Ok(child) => self.running.push(child),
            Err(e) => {
                let _ = writeln!(err, "warning: alarm hook failed to start: {e}");
            }
        }
    }

    fn finish(self, err: &mut dyn Write) {
        for mut child in self.running {
            match child.wait() {
                Ok(status) if !status.success() => {
                    let _ = writeln!(err, "warning: alarm hook exited with {status}");
                }
                Err(e) => {
                    let _ = writeln!(err, "warning: alarm hook: {e}");
                }
                Ok(_) => {}
            }
        }
    }
}

fn open_input(args: &ReplayArgs, err: &mut dyn Write) -> Result<Box<dyn BufRead>, CliError> {
    if let Some(addr) = &args.listen {
        let listener = TcpListener::bind(addr).map_err(|e| CliError::io(addr, e))?;
        let local = listener.local_addr().map_err(|e| CliError::io(addr, e))?;
        let _ = writeln!(err, "listening on {local}");
        let _ = err.flush();
        let (stream, _) = listener.accept().map_err(|e| CliError::io(addr, e))?;
        return Ok(Box::new(BufReader::new(stream)));
    }
    match &args.input {
        Some(path) if path.as_os_str() != "-" => {
            let file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
            Ok(Box::new(BufReader::new(file)))
        }
        _ => Ok(Box::new(io::stdin().lock())),
    }
}

fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = args.detector.resolve(&DetectorOverrides::default())?;
    let mut detector = Detector::new(config).map_err(|e| CliError::new(ExitStatus::Schema, e.to_string()))?;
    let input = open_input(args, err)?;

    let mut file_sink;
    let sink: &mut dyn Write = match &args.output {
        Some(path) => {
            file_sink = create(path)?;
            &mut file_sink
        }
        None => out,
    };
    let mut plot_sink = match &args.plot_output {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{}", plot::CSV_HEADER).map_err(|e| CliError::io(path.display(), e))?;
            Some(w)
        }
        None => None,
    };
    let mut hook = args.on_alarm.as_ref().map(|command| AlarmHook {
        command: command.clone(),
        running: Vec::new(),
    });

    let result = (|| {
        for (index, frame) in TraceReader::new(input).enumerate() {
            let frame = frame?;
            let outcome = detector.step(&frame).map_err(|e| {
                CliError::new(
                    detector_status(&e),
                    format!("frame {index} (t = {}): {e}", frame.timestamp),
                )
            })?;
            for event in &outcome.events {
                writeln!(sink, "{}", event.to_json_line()).map_err(|e| CliError::io("event sink", e))?;
                if event.kind == EventKind::AlarmOn {
                    if let Some(hook) = hook.as_mut() {
                        hook.fire(event, err);
                    }
                }
            }
            sink.flush().map_err(|e| CliError::io("event sink", e))?;
            if let Some(w) = plot_sink.as_mut() {
                PlotRow::capture(&frame, &outcome, &detector)
                    .write_csv(w)
                    .map_err(|e| CliError::io("plot output", e))?;
            }
        }
        Ok(())
    })();

    if let Some(mut w) = plot_sink {
        w.flush().map_err(|e| CliError::io("plot output", e))?;
    }
    if let Some(hook) = hook {
        hook.finish(err);
    }
    result
}

fn cmd_simulate(args: &SimulateArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let scenario = ScenarioFile::load(&args.scenario)?;
    let labeled = scenario.generate()?;
    write_file(&args.out, &labeled.trace.to_json_lines())?;
    let labels = LabelsFile {
        trace_id: scenario.name.clone(),
        drowsy_episodes: labeled.drowsy_episodes,
        detector: scenario.detector.clone(),
    };
    let labels_path = labels_path_for(&args.out);
    let mut json = serde_json::to_string_pretty(&labels).expect("labels serialize");
    json.push('\n');
    write_file(&labels_path, &json)?;
    let _ = writeln!(
        err,
        "wrote {} frames to {} and labels to {}",
        labeled.trace.frames.len(),
        args.out.display(),
        labels_path.display()
    );
    Ok(())
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = if let Some(dir) = &args.table {
        let report = eval::reproduce_reference_table(dir, args.grace)?;
        match args.format {
            ReportFormat::Text => report.to_string(),
            ReportFormat::Json => to_json_pretty(&report),
        }
    } else {
        let (Some(trace_path), Some(labels_path)) = (&args.trace, &args.labels) else {
            return Err(CliError::new(
                ExitStatus::Usage,
                "eval needs a trace and --labels, or --table",
            ));
        };
        let labels_text = fs::read_to_string(labels_path).map_err(|e| CliError::io(labels_path.display(), e))?;
        let labels: LabelsFile = serde_json::from_str(&labels_text)
            .map_err(|e| CliError::new(ExitStatus::Schema, format!("{}: {e}", labels_path.display())))?;
        let config = args.detector.resolve(&labels.detector)?;
        let mut trace = Trace::read(trace_path)?;
        trace.source_id = labels.trace_id.clone();
        let log = run_detector_on_trace(&trace, &config)?;
        let report = match_alarms(&log, &labels.drowsy_episodes, args.grace);
        match args.format {
            ReportFormat::Text => report.to_string(),
            ReportFormat::Json => to_json_pretty(&report),
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let config = args.detector.resolve(&DetectorOverrides::default())?;
    let trace = Trace::read(&args.trace)?;
    let mut rows = Vec::with_capacity(trace.frames.len());
    run_frames(&trace.frames, &config, |frame, outcome, detector| {
        rows.push(PlotRow::capture(frame, outcome, detector))
    })?;

    let mut csv = create(&args.out)?;
    let write_all = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "{}", plot::CSV_HEADER)?;
        for row in &rows {
            row.write_csv(w)?;
        }
        w.flush()
    };
    write_all(&mut csv).map_err(|e| CliError::io(args.out.display(), e))?;
    if let Some(svg) = &args.svg {
        write_file(svg, &render_svg(&rows, config.ear_threshold, config.score_threshold))?;
    }
    Ok(())
}

fn cmd_export_scenarios(dir: &Path, err: &mut dyn Write) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    for row in &REFERENCE_TABLE {
        let file = scenario_file_for_row(row)?;
        write_file(&dir.join(row.file_name()), &file.to_json_pretty())?;
    }
    let _ = writeln!(
        err,
        "wrote {} scenario files to {}",
        REFERENCE_TABLE.len(),
        dir.display()
    );
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { ExitStatus::Usage as i32 } else { 0 };
        }
    };
    let result = match &cli.command {
        Commands::Replay(args) => cmd_replay(args, out, err),
        Commands::Simulate(args) => cmd_simulate(args, err),
        Commands::Eval(args) => cmd_eval(args, out),
        Commands::Plot(args) => cmd_plot(args),
        Commands::ExportScenarios { dir } => cmd_export_scenarios(dir, err),
    };
    match result {
        Ok(()) => ExitStatus::Success as i32,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.status as i32
        }
    }
}

pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
