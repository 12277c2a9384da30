use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, KeySource, SimulateOptions};
use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "privaflow", version, about = "Private traffic-density aggregation: keys, simulation, benchmarks, dataset export")]
pub struct Cli {
    /// Run-config TOML file. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "PRIVAFLOW_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub drivers: Option<u32>,
    /// Grid cell count; the grid is reshaped to the most square factorization.
    #[arg(long, global = true)]
    pub cells: Option<usize>,
    #[arg(long, global = true)]
    pub k_anon: Option<u16>,
    #[arg(long, global = true)]
    pub epochs: Option<u32>,
    #[arg(long, global = true)]
    pub report_prob: Option<f64>,
    #[arg(long, global = true)]
    pub runs: Option<u32>,
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the master public key, driver keys, functional key and zero pools.
    Keygen {
        /// Draw keys from the OS entropy source instead of the seed.
        #[arg(long)]
        os_entropy: bool,
    },
    /// Run the fleet through encrypted reporting and check against the ground truth.
    Simulate {
        /// Generate seeded keys per run instead of loading them.
        #[arg(long, conflicts_with = "keys")]
        keygen: bool,
        /// Key directory; defaults to `<out>/keys`.
        #[arg(long)]
        keys: Option<PathBuf>,
        /// Also write per-driver positions. This is exactly the data the
        /// protocol hides; debug use only.
        #[arg(long)]
        dump_ground_truth: bool,
        /// Use only the deposited zero pool; never top it up.
        #[arg(long)]
        no_replenish: bool,
    },
    /// Time report encryption against k and decryption against fleet size.
    Bench,
    /// Build the forecaster dataset from a density series.
    Export {
        /// Density CSV; defaults to `<out>/density.csv`.
        #[arg(long)]
        series: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            drivers: self.drivers,
            cells: self.cells,
            k_anon: self.k_anon,
            epochs: self.epochs,
            report_prob: self.report_prob,
            runs: self.runs,
            threads: self.threads,
            out: self.out.clone(),
        }
    }

    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

/// Runs a parsed command line and writes its report to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    let cfg = cli.resolve_config()?;
    init_threads(cfg.threads)?;
    let p = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e));

    match &cli.command {
        Command::Keygen { os_entropy } => {
            let o = commands::keygen(&cfg, *os_entropy)?;
            let s = o.sizes;
            p(out, format!("wrote {} driver keys, mpk.bin, dk.bin and {} pools of {} to {}", o.n_drivers, o.n_drivers, o.pool_size, o.dir.display()))?;
            p(out, format!("{:<34} {:>9} {:>9}", "serialized size (bytes)", "measured", "claimed"))?;
            p(out, format!("{:<34} {:>9} {:>9}", "group element", s.element_len, s.element_len))?;
            p(out, format!("{:<34} {:>9} {:>9}", "cell ciphertext (t0, t1, c)", s.ciphertext_payload, s.claimed_ciphertext))?;
            p(out, format!("{:<34} {:>9} {:>9}", "cell ciphertext record", s.ciphertext_record, "-"))?;
            p(out, format!("{:<34} {:>9} {:>9}", "driver key ([a], [Wa], u)", s.key_payload, s.claimed_key))?;
            p(out, format!("{:<34} {:>9} {:>9}", "driver key file", s.key_record, "-"))?;
            let k = cfg.fleet.k_anon as usize;
            let (measured, claimed) = s.report_payload(k);
            p(out, format!("{:<34} {:>9} {:>9}", format!("report payload, k = {k}"), measured, claimed))?;
        }
        Command::Simulate {
            keygen,
            keys,
            dump_ground_truth,
            no_replenish,
        } => {
            let default_keys = commands::keys_dir(&cfg);
            let source = match keys {
                Some(dir) => KeySource::Dir(dir),
                None if *keygen => KeySource::Inline,
                None if default_keys.join("keyset.json").exists() => KeySource::Dir(&default_keys),
                None => {
                    eprintln!("no keys in {}; generating seeded keys inline", default_keys.display());
                    KeySource::Inline
                }
            };
            if *dump_ground_truth {
                eprintln!("warning: {} holds raw driver locations; do not share it", commands::GROUND_TRUTH_CSV);
            }
            let summary = commands::simulate(
                &cfg,
                &SimulateOptions {
                    keys: source,
                    dump_ground_truth: *dump_ground_truth,
                    replenish: !no_replenish,
                },
            )?;
            for r in &summary.runs {
                p(out, format!(
                    "run {:>3} seed {:>6}: {} epochs x {} cells, mismatches {} (under {}, over {}), max error {}",
                    r.run, r.seed, r.epochs, r.cells, r.mismatches, r.under_counts, r.over_counts, r.max_abs_error
                ))?;
            }
            let a = &summary.aggregate;
            p(out, format!(
                "{} runs: mismatches {} (mean {:.2}, max {}), under-counts {}, over-counts {}",
                a.runs, a.total_mismatches, a.mean_mismatches, a.max_mismatches, a.total_under_counts, a.total_over_counts
            ))?;
            p(out, format!("wrote {}", cfg.out.join(commands::SUMMARY_JSON).display()))?;
            summary.check()?;
        }
        Command::Bench => {
            let r = commands::bench(&cfg)?;
            p(out, "encryption, one report of k cells".into())?;
            p(out, format!("{:>6} {:>12}", "k", "median ms"))?;
            for pt in &r.encrypt {
                p(out, format!("{:>6} {:>12.3}", pt.x, pt.median_ms))?;
            }
            let f = r.encrypt_fit;
            p(out, format!("fit: {:.4} ms/cell + {:.4} ms, R^2 = {:.4}", f.slope, f.intercept, f.r_squared))?;
            p(out, format!("reference: about {} ms for 80 cells", r.reference_encrypt_ms_80_cells))?;
            p(out, format!("decryption, all {} cells of one epoch", r.decrypt_cells))?;
            p(out, format!("{:>8} {:>12}", "drivers", "median ms"))?;
            for pt in &r.decrypt {
                p(out, format!("{:>8} {:>12.3}", pt.x, pt.median_ms))?;
            }
            p(out, format!(
                "reference: under {} ms for 200 drivers and 80 cells",
                r.reference_decrypt_ms_200_drivers_80_cells
            ))?;
            p(out, format!("wrote {}", cfg.out.join(commands::BENCH_DIR).display()))?;
        }
        Command::Export { series } => {
            let path = series.clone().unwrap_or_else(|| cfg.out.join(commands::DENSITY_CSV));
            let (dir, m) = commands::export(&cfg, &path)?;
            p(out, format!(
                "{} samples ({} skipped without daily/weekly history), {} cells, n = {}, horizons {:?}",
                m.samples, m.skipped_incomplete, m.cells, m.window.n, m.window.horizons
            ))?;
            for s in &m.splits {
                p(out, format!(
                    "{:<5} {:>6} samples, targets {}..={}, sha256 {}",
                    s.name, s.samples, s.first_target_epoch, s.last_target_epoch, s.sha256
                ))?;
            }
            p(out, format!("dataset sha256 {}", m.dataset_sha256))?;
            p(out, format!("wrote {}", dir.display()))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from(["privaflow", "simulate", "--drivers", "7", "--k-anon", "2", "--report-prob", "0.8"]).unwrap();
        let cfg = cli.resolve_config().unwrap();
        assert_eq!(cfg.fleet.n_drivers, 7);
        assert_eq!(cfg.fleet.k_anon, 2);
        assert_eq!(cfg.fleet.report_probability, 0.8);
        assert!(Cli::try_parse_from(["privaflow", "simulate", "--keygen", "--keys", "x"]).is_err());
    }

    #[test]
    fn invalid_override_is_config_error() {
        let cli = Cli::try_parse_from(["privaflow", "--k-anon", "500", "bench"]).unwrap();
        assert_eq!(cli.resolve_config().unwrap_err().exit_code(), 2);
    }
}
