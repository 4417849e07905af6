use clap::{Parser, Subcommand};
use ibcm::cases::{CaseId, Mode};
use ibcm::cli::{exit_code, run, RunConfig};
use ibcm::shell::Theory;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ibcm", version, about = "Shell analysis on trimmed spline surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the benchmark cases.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// plate, mixed, cylinders or crack
    case: CaseId,
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theory: Option<Theory>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma2: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per direction of the VTK field output (0 disables it).
    #[arg(long)]
    samples: Option<usize>,
    /// Continue past SPD failures and report condition estimates.
    #[arg(long)]
    diagnostic: bool,
}

fn config(a: RunArgs) -> ibcm::Result<RunConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut c = RunConfig::from_toml(&text)?;
            c.case = a.case;
            c
        }
        None => RunConfig::new(a.case),
    };
    if let Some(v) = a.theory {
        c.theory = v;
    }
    if let Some(v) = a.p {
        c.p = v;
    }
    if let Some(v) = a.levels {
        c.levels = v;
    }
    if a.tau.is_some() {
        c.tau = a.tau;
    }
    if let Some(v) = a.mode {
        c.mode = v;
    }
    if a.beta.is_some() {
        c.nitsche.beta = a.beta;
    }
    if a.gamma1.is_some() {
        c.nitsche.gamma1 = a.gamma1;
    }
    if a.gamma2.is_some() {
        c.nitsche.gamma2 = a.gamma2;
    }
    if let Some(v) = a.out {
        c.out = v;
    }
    if let Some(v) = a.samples {
        c.samples = v;
    }
    c.diagnostic |= a.diagnostic;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("IBCM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let Command::Run(args) = Cli::parse().command;
    let result = config(args).and_then(|c| run(&c).map(|o| (c, o)));
    match result {
        Ok((c, o)) => {
            for l in &o.levels {
                println!("level {}: h = {:.4e}, dofs = {}, spd = {}", l.level, l.h, l.dofs, l.spd.spd);
            }
            if let Some(s) = &o.study {
                let f = |r: Option<f64>| r.map_or("-".to_string(), |r| format!("{r:.3}"));
                println!("rates: L2 {}, H1 {}, H2 {}, locking {}", f(s.rates[0]), f(s.rates[1]), f(s.rates[2]), s.locking);
            }
            println!("wrote {} files to {}", o.files.len(), c.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
