mod problem;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use problem::{Overrides, ProblemFile};
use report::{Report, Settings, Status};
use run::Failure;

#[derive(Parser)]
#[command(name = "dwellcert", version, about = "Dwell-time certificates for linear impulsive systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify stability under the problem's dwell-time constraint.
    Analyze(Common),
    /// Search for the certified dwell-time bounds.
    Search(Common),
    /// Design a state-feedback controller.
    Synthesize(Common),
    /// Sampled-data systems with a zero-order hold.
    SampledData {
        #[command(subcommand)]
        command: SampledCommand,
    },
    /// Re-check a certificate (or a report containing one) against a problem.
    Verify {
        #[command(flatten)]
        common: Common,
        certificate: PathBuf,
    },
    /// Simulate the system, open or closed loop.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Controller file, or a synthesis report.
        controller: Option<PathBuf>,
    },
    /// Count scalar decision variables.
    Count(Common),
}

#[derive(Subcommand)]
enum SampledCommand {
    /// Certify a sampled-data loop with given gains.
    Analyze(Common),
    /// Design sampled-data gains.
    Synthesize(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the trajectory of `simulate` as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// SOS witness degree.
    #[arg(long, conflicts_with = "segments")]
    degree: Option<usize>,
    /// Piecewise-linear witness with this many segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Audit grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// Bisection tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            degree: self.degree,
            segments: self.segments,
            grid: self.grid,
            tol: self.tol,
        }
    }
}

enum Task<'a> {
    Analyze,
    Search,
    Synthesize,
    SampledAnalyze,
    SampledSynthesize,
    Verify(&'a Path),
    Simulate(Option<&'a Path>),
    Count,
}

impl Task<'_> {
    fn name(&self) -> &'static str {
        match self {
            Task::Analyze => "analyze",
            Task::Search => "search",
            Task::Synthesize => "synthesize",
            Task::SampledAnalyze => "sampled-data analyze",
            Task::SampledSynthesize => "sampled-data synthesize",
            Task::Verify(_) => "verify",
            Task::Simulate(_) => "simulate",
            Task::Count => "count",
        }
    }

    fn kind(&self) -> problem::Task {
        match self {
            Task::Analyze | Task::SampledAnalyze => problem::Task::Analyze,
            Task::Search => problem::Task::Search,
            Task::Synthesize | Task::SampledSynthesize => problem::Task::Synthesize,
            Task::Verify(_) => problem::Task::Verify,
            Task::Simulate(_) => problem::Task::Simulate,
            Task::Count => problem::Task::Count,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn execute(task: &Task, common: &Common, report: &mut Report, problem: &mut ProblemFile) -> Result<(), Failure> {
    problem.apply(&common.overrides())?;
    report.settings.method = Some(serde_json::to_value(problem.encoder()?)?);
    report.settings.options = problem.options.clone();
    if let Some(t) = problem.task.filter(|t| *t != task.kind()) {
        report.warnings.push(format!("problem file names task {t:?}; running {}", task.name()));
    }
    match task {
        Task::Analyze => run::analyze(problem, report),
        Task::Search => run::search(problem, report),
        Task::Synthesize => run::synthesize(problem, report),
        Task::SampledAnalyze => run::sampled_analyze(problem, report),
        Task::SampledSynthesize => run::sampled_synthesize(problem, report),
        Task::Verify(cert) => run::verify(problem, &read(cert)?, report),
        Task::Simulate(ctrl) => {
            let ctrl = ctrl.map(read).transpose()?;
            let csv = run::simulate_task(problem, ctrl.as_deref(), report)?;
            if let (Some(path), Some(csv)) = (&common.csv, csv) {
                std::fs::write(path, csv).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Task::Count => run::count(problem, report),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, common) = match &cli.command {
        Command::Analyze(c) => (Task::Analyze, c),
        Command::Search(c) => (Task::Search, c),
        Command::Synthesize(c) => (Task::Synthesize, c),
        Command::SampledData { command } => match command {
            SampledCommand::Analyze(c) => (Task::SampledAnalyze, c),
            SampledCommand::Synthesize(c) => (Task::SampledSynthesize, c),
        },
        Command::Verify { common, certificate } => (Task::Verify(certificate), common),
        Command::Simulate { common, controller } => (Task::Simulate(controller.as_deref()), common),
        Command::Count(c) => (Task::Count, c),
    };

    let settings = Settings {
        method: None,
        options: problem::Options::default(),
        sdp: dwellcert::analysis::AnalysisOptions::default().sdp,
    };
    let start = Instant::now();
    let text = match read(&common.problem) {
        Ok(t) => t,
        Err(Failure::Input(e) | Failure::Numerical(e) | Failure::NotFound(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::InputError.exit_code());
        }
    };
    let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
    let raw = serde_json::from_str(&text).unwrap_or(serde_json::Value::Null);
    let mut report = Report::new(task.name(), digest, raw, settings);

    let outcome = ProblemFile::parse(&text)
        .map_err(Failure::Input)
        .and_then(|mut p| execute(&task, common, &mut report, &mut p));
    if let Err(f) = outcome {
        let (status, msg) = match f {
            Failure::Input(m) => (Status::InputError, m),
            Failure::Numerical(m) => (Status::NumericalFailure, m),
            Failure::NotFound(m) => (Status::Infeasible, m),
        };
        eprintln!("error: {msg}");
        report.status = status;
        report.error = Some(msg);
    }
    report.seconds = start.elapsed().as_secs_f64();

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &common.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(Status::InputError.exit_code());
            }
        }
        None => {
            use std::io::Write;
            // a closed pipe is not an error of the run
            let _ = writeln!(std::io::stdout(), "{json}");
        }
    }
    ExitCode::from(report.status.exit_code())
}
