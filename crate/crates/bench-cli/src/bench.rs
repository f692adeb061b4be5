use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lazycopy::runtime::Mode;
use lazycopy::summary::{iqr, loglog_slope, median};
use lazycopy::workloads::{run_filter, FilterConfig, FilterRun, CSV_HEADER};

use crate::cli::Common;

/// Outcome of a command that ran to completion.
#[derive(Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// Outputs disagreed across configurations, or a check failed.
    Divergent,
}

pub const RUN_HEADER_PREFIX: &str = "rep,horizon,resampling,";

fn check_common(c: &Common) -> Result<()> {
    if c.threads != 1 {
        bail!("--threads {} is not supported; this build is single-threaded", c.threads);
    }
    if c.configs.is_empty() {
        bail!("no configurations given");
    }
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(())
}

fn filter_config(c: &Common, mode: Mode, generations: u32) -> FilterConfig {
    let mut cfg = FilterConfig::new(c.workload, mode, c.particles as usize, generations as usize, c.seed);
    cfg.resampling = c.resampling.into();
    cfg.count_reachable = c.count_reachable;
    cfg
}

fn resampling_name(cfg: &FilterConfig) -> &'static str {
    match cfg.resampling {
        lazycopy::workloads::Resampling::Multinomial => "multinomial",
        lazycopy::workloads::Resampling::Systematic => "systematic",
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct ConfigRuns {
    mode: Mode,
    runs: Vec<FilterRun>,
}

impl ConfigRuns {
    fn elapsed_ms(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.elapsed_ns() as f64 / 1e6).collect()
    }

    fn digests(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().map(|r| r.digest)
    }
}

fn run_reps(c: &Common, mode: Mode, generations: u32) -> Result<ConfigRuns> {
    let cfg = filter_config(c, mode, generations);
    let runs = (0..c.reps)
        .map(|_| run_filter(&cfg).with_context(|| format!("{mode} run failed")))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfigRuns { mode, runs })
}

/// True when every run of every configuration produced the same digest.
fn digests_agree(all: &[ConfigRuns]) -> bool {
    let mut it = all.iter().flat_map(ConfigRuns::digests);
    let first = it.next();
    it.all(|d| Some(d) == first)
}

pub fn bench(c: &Common, generations: u32) -> Result<(Verdict, String)> {
    check_common(c)?;
    let stem = format!("{}_N{}_T{}_seed{}", c.workload, c.particles, generations, c.seed);
    let mut all = Vec::new();
    for &mode in &c.configs {
        let runs = run_reps(c, mode, generations)?;
        let cfg = filter_config(c, mode, generations);
        let mut csv = format!("{RUN_HEADER_PREFIX}{CSV_HEADER}\n");
        for (rep, run) in runs.runs.iter().enumerate() {
            for g in &run.generations {
                let _ = writeln!(csv, "{rep},{generations},{},{}", resampling_name(&cfg), g.csv_row(&cfg));
            }
        }
        write(&bench_csv_path(&c.out, &stem, mode), &csv)?;
        all.push(runs);
    }

    let mut s = format!(
        "workload {} N {} T {} seed {} reps {}\n{:<10} {:>12} {:>10} {:>12} {:>12} {:>18} {:>10}\n",
        c.workload, c.particles, generations, c.seed, c.reps, "config", "median_ms", "iqr_ms", "peak_live", "copies",
        "digest", "leak_free"
    );
    let mut leaks = false;
    for r in &all {
        let ms = r.elapsed_ms();
        let last = r.runs.last().expect("reps >= 1");
        let leak_free = r.runs.iter().all(FilterRun::leak_free);
        leaks |= !leak_free;
        let _ = writeln!(
            s,
            "{:<10} {:>12.3} {:>10.3} {:>12} {:>12} {:>18x} {:>10}",
            r.mode.name(),
            median(&ms),
            iqr(&ms),
            last.peak_live_objects,
            last.total_copies,
            last.digest,
            leak_free
        );
    }
    let agree = digests_agree(&all);
    s.push_str(if agree { "digests: equal\n" } else { "digests: MISMATCH\n" });
    if leaks {
        s.push_str("reclamation: objects left live at exit\n");
    }
    write(&c.out.join(format!("{stem}_summary.txt")), &s)?;
    let verdict = if agree && !leaks { Verdict::Ok } else { Verdict::Divergent };
    Ok((verdict, s))
}

pub fn bench_csv_path(out: &Path, stem: &str, mode: Mode) -> PathBuf {
    out.join(format!("{stem}_{mode}.csv"))
}

pub const SWEEP_HEADER: &str =
    "config,workload,N,T,seed,reps,median_elapsed_ns,iqr_elapsed_ns,peak_live_objects,total_copies,digest";
pub const CURVE_HEADER: &str = "config,workload,N,T,seed,t,cumulative_elapsed_ns,live_objects";

/// (T, median elapsed ns, peak live objects).
type Point = (f64, f64, f64);

pub fn sweep(c: &Common, grid: &[u32]) -> Result<(Verdict, String)> {
    check_common(c)?;
    if grid.is_empty() {
        bail!("empty horizon grid");
    }
    let stem = format!("sweep_{}_N{}_seed{}", c.workload, c.particles, c.seed);
    let mut table = format!("{SWEEP_HEADER}\n");
    let mut curves = format!("{CURVE_HEADER}\n");
    let mut agree = true;
    let mut points: Vec<(Mode, Vec<Point>)> = c.configs.iter().map(|&m| (m, Vec::new())).collect();
    for &t in grid {
        let mut at_t = Vec::new();
        for (i, &mode) in c.configs.iter().enumerate() {
            let r = run_reps(c, mode, t)?;
            let ns: Vec<f64> = r.runs.iter().map(|x| x.elapsed_ns() as f64).collect();
            let first = &r.runs[0];
            let _ = writeln!(
                table,
                "{mode},{},{},{t},{},{},{:.0},{:.0},{},{},{:016x}",
                c.workload,
                c.particles,
                c.seed,
                c.reps,
                median(&ns),
                iqr(&ns),
                first.peak_live_objects,
                first.total_copies,
                first.digest
            );
            let mut cum = 0u64;
            for g in &first.generations {
                cum += g.elapsed_ns;
                let _ =
                    writeln!(curves, "{mode},{},{},{t},{},{},{cum},{}", c.workload, c.particles, c.seed, g.t, g.live_objects);
            }
            points[i].1.push((t as f64, median(&ns), first.peak_live_objects as f64));
            at_t.push(r);
        }
        agree &= digests_agree(&at_t);
    }
    write(&c.out.join(format!("{stem}.csv")), &table)?;
    write(&c.out.join(format!("{stem}_curves.csv")), &curves)?;

    let mut s = format!("sweep workload {} N {} seed {} reps {}\n", c.workload, c.particles, c.seed, c.reps);
    let distinct = {
        let mut g = grid.to_vec();
        g.sort_unstable();
        g.dedup();
        g.len()
    };
    for (mode, pts) in &points {
        if distinct < 2 {
            let _ = writeln!(s, "{:<10} slopes omitted (single horizon)", mode.name());
            continue;
        }
        let time: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
        let mem: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.2)).collect();
        let _ = writeln!(
            s,
            "{:<10} time slope {:.2}  memory slope {:.2}",
            mode.name(),
            loglog_slope(&time),
            loglog_slope(&mem)
        );
    }
    s.push_str(if agree { "digests: equal\n" } else { "digests: MISMATCH\n" });
    write(&c.out.join(format!("{stem}_summary.txt")), &s)?;
    Ok((if agree { Verdict::Ok } else { Verdict::Divergent }, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::{Cli, Command};
    use clap::Parser;

    fn common(args: &[&str]) -> Common {
        match Cli::parse_from([&["lazybench", "bench"], args].concat()).command {
            Command::Bench(b) => b.common,
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_cover_all_configurations() {
        let c = common(&[]);
        assert_eq!(c.configs, Mode::ALL);
        assert_eq!((c.reps, c.threads, c.particles), (5, 1, 256));
    }

    #[test]
    fn digest_agreement_spans_configurations() {
        let c = common(&["--N", "3", "--reps", "2"]);
        let mut runs: Vec<ConfigRuns> = c.configs.iter().map(|&m| run_reps(&c, m, 4).unwrap()).collect();
        assert!(digests_agree(&runs));
        runs[1].runs[1].digest ^= 1;
        assert!(!digests_agree(&runs));
    }
}
