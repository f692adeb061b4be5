//! `lazybench`: exit status 0 on success, 2 when outputs diverge or a
//! scenario check fails, 3 on usage or I/O errors.

mod bench;
mod cli;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use lazycopy::scenarios;

use bench::Verdict;
use cli::{Cli, Command, ScenarioName};

const DIVERGENT: u8 = 2;
const ENVIRONMENT: u8 = 3;

fn run(cli: Cli) -> Result<Verdict> {
    let (verdict, report) = match cli.command {
        Command::Bench(a) => bench::bench(&a.common, a.generations)?,
        Command::Sweep(a) => bench::sweep(&a.common, &a.grid)?,
        Command::Scenario(a) => {
            let t = match a.name {
                ScenarioName::Table1 => scenarios::table1()?,
                ScenarioName::Table2 => scenarios::table2(!a.disable_cross_ref_guard)?,
            };
            let mut report = t.to_string();
            if let Some(first) = t.failures().first() {
                report.push_str(&format!("\nfirst divergent row: {}", first.row));
            }
            (if t.passed() { Verdict::Ok } else { Verdict::Divergent }, report)
        }
    };
    println!("{}", report.trim_end());
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(ENVIRONMENT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Divergent) => ExitCode::from(DIVERGENT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ENVIRONMENT)
        }
    }
}
