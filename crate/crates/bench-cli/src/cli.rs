use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lazycopy::runtime::Mode;
use lazycopy::workloads::{Resampling, Workload};

#[derive(Parser, Debug)]
#[command(name = "lazybench", version, about = "Benchmarks and scenario checks for lazy deep copies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a particle filter under each configuration and compare outputs.
    Bench(BenchArgs),
    /// Replay a scripted example and check the heap after every row.
    Scenario(ScenarioArgs),
    /// Run a grid of horizons and fit scaling exponents.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value = "chain")]
    pub workload: Workload,
    /// Configurations to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "eager,lazy,lazy-sro")]
    pub configs: Vec<Mode>,
    #[arg(long = "N", default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    pub particles: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    #[arg(long, value_enum, default_value_t = ResamplingArg::Multinomial)]
    pub resampling: ResamplingArg,
    /// Count objects reachable from the population after every generation.
    #[arg(long)]
    pub count_reachable: bool,
    #[arg(long, env = "LAZYBENCH_OUT", default_value = "results")]
    pub out: PathBuf,
    /// Worker threads; only 1 is supported.
    #[arg(long, default_value_t = 1)]
    pub threads: u32,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "T", default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..))]
    pub generations: u32,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Horizons to run, comma separated.
    #[arg(long = "T", value_delimiter = ',', default_value = "64,128,256,512", value_parser = clap::value_parser!(u32).range(1..))]
    pub grid: Vec<u32>,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    pub name: ScenarioName,
    /// Turn off cross-reference handling to show the failure it prevents.
    #[arg(long)]
    pub disable_cross_ref_guard: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioName {
    Table1,
    Table2,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResamplingArg {
    Multinomial,
    Systematic,
}

impl From<ResamplingArg> for Resampling {
    fn from(r: ResamplingArg) -> Self {
        match r {
            ResamplingArg::Multinomial => Resampling::Multinomial,
            ResamplingArg::Systematic => Resampling::Systematic,
        }
    }
}
