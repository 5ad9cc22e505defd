use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tierjit::backend::{dump_function, PlantedBug};
use tierjit::bench::bench;
use tierjit::coreir::{parse_program, validate_program, Program};
use tierjit::fuzz::{campaign, GenConfig};
use tierjit::monitor::{jit_run_with, Config, Hotness, StackImpl};
use tierjit::nativegen::host_supported;
use tierjit::primitives::Tier;
use tierjit::refsem::ref_run;
use tierjit::Status;

const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "tierjit", version, about = "Run CoreIR programs under a tiered JIT")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program and print its trace and status.
    Run {
        path: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Differential fuzzing against the reference semantics.
    Fuzz {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        /// Statements per generated block.
        #[arg(long, default_value_t = 6)]
        size: usize,
        #[arg(long, hide = true)]
        planted_bug: bool,
    },
    /// Compare interpreter-only and JIT wall time.
    Bench {
        path: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Print the segments, live sets and compiled units of one function.
    Dump { path: PathBuf, fun: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ref,
    Jit,
}

#[derive(Clone, Copy, ValueEnum)]
enum TierArg {
    Rtl,
    Native,
}

#[derive(Clone, Copy, ValueEnum)]
enum StackArg {
    Structured,
    Flat,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "jit")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "rtl")]
    tier: TierArg,
    #[arg(long = "stack-impl", value_enum, default_value = "flat")]
    stack_impl: StackArg,
    /// Calls before a function is compiled, or `inf` to never compile.
    #[arg(long, default_value = "2", value_parser = parse_hotness)]
    hotness: Hotness,
    /// Instructions per interpreter slice.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
    #[arg(long = "heap-size", default_value_t = 4096)]
    heap_size: usize,
    #[arg(long = "step-cap", default_value_t = 10_000_000)]
    step_cap: u64,
    /// Print monitor transitions to stderr.
    #[arg(long)]
    log: bool,
    /// Print the compiled units to stderr after the run.
    #[arg(long = "dump-rtl")]
    dump_rtl: bool,
}

fn parse_hotness(s: &str) -> Result<Hotness, String> {
    match s {
        "inf" => Ok(Hotness::Never),
        _ => s.parse().map(Hotness::Calls).map_err(|_| format!("expected a count or `inf`, got `{s}`")),
    }
}

impl EngineArgs {
    fn config(&self) -> Config {
        Config {
            tier: match self.tier {
                TierArg::Rtl => Tier::Rtl,
                TierArg::Native => Tier::Native,
            },
            stack_impl: match self.stack_impl {
                StackArg::Structured => StackImpl::Structured,
                StackArg::Flat => StackImpl::Flat,
            },
            hotness: self.hotness,
            fuel: self.fuel,
            heap_size: self.heap_size,
            step_cap: self.step_cap,
            log: self.log,
            ..Config::default()
        }
    }

    fn check_host(&self) -> Result<(), ExitCode> {
        if matches!(self.tier, TierArg::Native) && !host_supported() {
            eprintln!("error: the native tier needs an x86-64 Linux host; use --tier rtl");
            return Err(ExitCode::from(EXIT_USAGE));
        }
        Ok(())
    }
}

fn load(path: &Path) -> Result<Program, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_USAGE)
    })?;
    let p = parse_program(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_USAGE)
    })?;
    let mut bad = false;
    for v in validate_program(&p) {
        eprintln!("{v}");
        bad |= v.is_error();
    }
    if bad {
        return Err(ExitCode::from(EXIT_USAGE));
    }
    Ok(p)
}

fn status_code(s: &Status) -> ExitCode {
    ExitCode::from(match s {
        Status::Terminated(_) => 0,
        Status::Errored(_) => 1,
        Status::StepCapReached => 2,
    })
}

fn run(path: &Path, engine: &EngineArgs) -> Result<ExitCode, ExitCode> {
    engine.check_host()?;
    let p = load(path)?;
    let cfg = engine.config();
    let behavior = match engine.mode {
        Mode::Ref => ref_run(&p, cfg.heap_size, cfg.step_cap),
        Mode::Jit => {
            let report = jit_run_with(&p, cfg, None, engine.dump_rtl);
            for e in &report.events {
                eprintln!("{e}");
            }
            for (f, why) in &report.cancelled {
                eprintln!("compilation of {} cancelled: {why}", p.get(*f).name);
            }
            for u in &report.units {
                eprint!("{u}");
            }
            report.behavior
        }
    };
    print!("{}", behavior.render());
    Ok(status_code(&behavior.status))
}

fn fuzz(seed: u64, count: u64, size: usize, planted_bug: bool) -> ExitCode {
    let gen = GenConfig { max_stmts: size.max(1), ..GenConfig::default() };
    let bug = planted_bug.then_some(PlantedBug::RestoreInSaveOrder);
    let report = campaign(seed, count, &gen, bug);
    match report.mismatches.first() {
        None => {
            println!("{} cases, 0 mismatches", report.cases);
            ExitCode::SUCCESS
        }
        Some(m) => {
            println!("{} cases, {} mismatches; first is case {}", report.cases, report.mismatches.len(), m.index);
            println!("config: {:?}", m.config);
            println!("program:\n{}", m.program);
            println!("reference:\n{}", m.reference.render());
            println!("jit:\n{}", m.jit.render());
            ExitCode::from(1)
        }
    }
}

fn bench_cmd(path: &Path, reps: usize, engine: &EngineArgs) -> Result<ExitCode, ExitCode> {
    engine.check_host()?;
    let p = load(path)?;
    let r = bench(&p, engine.config(), reps);
    println!("interpreter only: {:?} (median of {reps})", r.interp);
    println!("jit: {:?} (median of {reps})", r.jit);
    println!("ratio: {:.2}", r.ratio());
    Ok(ExitCode::SUCCESS)
}

fn dump(path: &Path, fun: &str) -> Result<ExitCode, ExitCode> {
    let p = load(path)?;
    match dump_function(&p, fun) {
        Ok(text) => {
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {}", e.0);
            Err(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let out = match &cli.cmd {
        Cmd::Run { path, engine } => run(path, engine),
        Cmd::Fuzz { seed, count, size, planted_bug } => Ok(fuzz(*seed, *count, *size, *planted_bug)),
        Cmd::Bench { path, reps, engine } => bench_cmd(path, *reps, engine),
        Cmd::Dump { path, fun } => dump(path, fun),
    };
    out.unwrap_or_else(|code| code)
}
