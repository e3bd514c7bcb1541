use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::Parser;

use actasp::lp::parse_program;
use actasp::reactive::{serve, ReactiveServer};
use actasp::runner::{read, render_cycle, Event, Expectation, ReportFormat, RunConfig, Runner};
use actasp::world::WorldConfig;

const USAGE: &str =
    "commands: request <from> <to> <id> | cancel <id> | block <a> <b> | unblock <a> <b> | status | quit";

/// Runs the delivery planner against the simulated office world.
#[derive(Debug, Parser)]
#[command(name = "actasp", version)]
struct Cli {
    /// TOML run configuration; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Logic program with the task encoding.
    #[arg(long)]
    program: Option<PathBuf>,
    /// World file.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Tag table mapping labels to poses.
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Timed events to replay.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Expected plans per cycle; a mismatch makes the exit code 1.
    #[arg(long)]
    expect: Option<PathBuf>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long)]
    horizon_cap: Option<i64>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// `human` or `kv`.
    #[arg(long)]
    report_format: Option<ReportFormat>,
    /// Read requests from standard input.
    #[arg(long, conflicts_with_all = ["scenario", "expect", "serve"])]
    interactive: bool,
    /// Run only the reactive solver on `stdio` or `host:port`.
    #[arg(long, value_name = "ENDPOINT")]
    serve: Option<String>,
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let (Some(program), Some(world)) = (&self.program, &self.world) else {
                    bail!("give --config, or both --program and --world");
                };
                RunConfig::new(program, world)
            }
        };
        if let Some(p) = &self.program {
            cfg.program = p.clone();
        }
        if let Some(p) = &self.world {
            cfg.world = p.clone();
        }
        if self.tags.is_some() {
            cfg.tags = self.tags.clone();
        }
        if self.scenario.is_some() {
            cfg.scenario = self.scenario.clone();
        }
        if self.expect.is_some() {
            cfg.expect = self.expect.clone();
        }
        if let Some(n) = self.max_cycles {
            cfg.max_cycles = n;
        }
        if let Some(h) = self.horizon_cap {
            cfg.horizon_cap = h;
        }
        if let Some(f) = self.report_format {
            cfg.report_format = f;
        }
        if self.interactive {
            cfg.scenario = None;
            cfg.expect = None;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(endpoint) = &cli.serve {
        return serve_only(cli, endpoint);
    }
    let cfg = cli.run_config()?;
    if cli.interactive {
        interactive(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    let expect = cfg.expect.as_deref().map(Expectation::load).transpose()?;
    let mut runner = Runner::from_config(&cfg)?;
    runner.run(cfg.max_cycles)?;
    let report = runner.render(cfg.report_format);
    match &cli.report {
        Some(path) => std::fs::write(path, &report)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{report}"),
    }
    if let Some(mismatch) = expect.and_then(|e| e.check(runner.reports())) {
        eprintln!("trace mismatch at {mismatch}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn serve_only(cli: &Cli, endpoint: &str) -> Result<ExitCode> {
    let Some(path) = &cli.program else {
        bail!("--serve needs --program");
    };
    let mut text = read(path)?;
    if let Some(world) = &cli.world {
        text.push_str("\n#base.\n");
        text.push_str(&WorldConfig::load(world)?.facts());
    }
    let program = parse_program(&text).with_context(|| path.display().to_string())?;
    let mut server = ReactiveServer::new(program);
    serve(endpoint, &mut server)?;
    Ok(ExitCode::SUCCESS)
}

enum Command {
    Event(Event),
    Status,
    Quit,
}

fn parse_command(line: &str) -> Option<Command> {
    match line.split_whitespace().next()? {
        "status" => Some(Command::Status),
        "quit" | "exit" => Some(Command::Quit),
        _ => line.parse().ok().map(Command::Event),
    }
}

fn interactive(cfg: &RunConfig) -> Result<()> {
    let mut runner = Runner::from_config(&RunConfig {
        scenario: None,
        ..cfg.clone()
    })?;
    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut out = io::stdout();
    writeln!(out, "{USAGE}")?;
    let mut open = true;
    while open || runner.has_work() {
        // Block for input only when there is nothing to plan.
        let mut lines = Vec::new();
        if !runner.has_work() {
            match rx.recv() {
                Ok(l) => lines.push(l),
                Err(_) => open = false,
            }
        }
        lines.extend(rx.try_iter());
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            match parse_command(&line) {
                Some(Command::Event(ev)) => {
                    let seen = runner.notes().len();
                    if let Err(e) = runner.apply(&ev) {
                        writeln!(out, "error: {e}")?;
                    }
                    for note in &runner.notes()[seen..] {
                        writeln!(out, "note: {note}")?;
                    }
                }
                Some(Command::Status) => {
                    for (p, s) in runner.goal_summary() {
                        writeln!(out, "package {p}: {s}")?;
                    }
                    let state = runner.sim.world.state();
                    writeln!(out, "robot at {} at tick {}", state.robot, state.tick)?;
                }
                Some(Command::Quit) => {
                    write!(out, "{}", runner.render_summary(cfg.report_format))?;
                    return Ok(());
                }
                None => writeln!(out, "{USAGE}")?,
            }
        }
        if runner.has_work() {
            let report = runner.step()?;
            write!(out, "{}", render_cycle(report, cfg.report_format))?;
            out.flush()?;
        }
    }
    write!(out, "{}", runner.render_summary(cfg.report_format))?;
    Ok(())
}
