use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use densnav::scenario::{self, Scenario};

/// Density-based navigation pipeline driven by scenario files.
#[derive(Parser)]
#[command(name = "densnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the generator matrices from open-loop snapshots.
    Fit(Common),
    /// Assemble and solve the navigation program.
    Solve(Common),
    /// Closed-loop evaluation of the stored solution.
    Eval(Common),
    /// Write the assembled program in navlp format.
    ExportLp {
        #[command(flatten)]
        common: Common,
        /// Destination file (default: <out>/problem.navlp).
        #[arg(long)]
        lp: Option<PathBuf>,
    },
    /// Sample the configured terrain onto a raster file.
    MakeRaster {
        #[command(flatten)]
        common: Common,
        /// Destination file (default: <out>/terrain.trav).
        #[arg(long)]
        raster: Option<PathBuf>,
        /// Nodes per axis.
        #[arg(long, default_value_t = 121)]
        resolution: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the snapshot and evaluation seeds.
    #[arg(long)]
    seed_override: Option<u64>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(out) = &self.out {
            let cwd = std::env::current_dir()?;
            s.config.output = cwd.join(out);
        }
        if let Some(seed) = self.seed_override {
            s.override_seed(seed);
        }
        Ok(s)
    }
}

fn main() -> Result<()> {
    let threads = match std::env::var("NAVDENS_THREADS") {
        Ok(v) => v.parse::<usize>().context("NAVDENS_THREADS must be a positive integer")?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;

    let cli = Cli::parse();
    let start = Instant::now();
    match cli.command {
        Command::Fit(c) => {
            let s = c.scenario()?;
            let (gens, diag) = scenario::run_fit(&s)?;
            print!("{}", diag.report());
            println!(
                "wrote {} generators of size {} to {}",
                gens.inputs() + 1,
                gens.size(),
                s.output_dir().join("generators").display()
            );
        }
        Command::Solve(c) => {
            let s = c.scenario()?;
            let (sol, _) = scenario::run_solve(&s)?;
            println!("status        {:?}", sol.status);
            println!("objective     {:.9e}", sol.objective);
            println!("iterations    {}", sol.iterations);
            if let Some(g) = sol.gamma {
                println!("gamma         {g:.9e}");
            }
            println!("d1'v          {:.3e}", sol.obstacle_mass);
            println!("d2'v          {:.9e}", sol.trav_budget_used);
            println!(
                "kkt           eq {:.2e}  ineq {:.2e}  dual {:.2e}  gap {:.2e}",
                sol.residuals.primal_eq, sol.residuals.primal_ineq, sol.residuals.dual, sol.residuals.complementarity
            );
        }
        Command::Eval(c) => {
            let s = c.scenario()?;
            let r = scenario::run_eval(&s)?;
            let m = &r.metrics;
            println!("success rate        {:.3}", m.success_rate);
            println!("obstacle occupancy  {:.3} s (successful runs)", m.obstacle_occupancy);
            println!("mean trav cost      {:.6}", m.mean_trav_cost);
            println!("mean weighted cost  {:.6}", m.mean_weighted_cost);
            println!("saturation          {:.4}", m.saturation_fraction);
            println!("fallback            {:.4}", m.fallback_fraction);
            if m.failed_runs == m.n_samples {
                bail!("every run failed");
            }
        }
        Command::ExportLp { common, lp } => {
            let s = common.scenario()?;
            let path = lp.unwrap_or_else(|| s.output_dir().join("problem.navlp"));
            let a = scenario::run_export_lp(&s, &path)?;
            println!(
                "wrote {} variables, {} equality and {} inequality rows to {}",
                a.lp.num_vars(),
                a.lp.a_eq.nrows(),
                a.lp.a_ineq.nrows(),
                path.display()
            );
        }
        Command::MakeRaster {
            common,
            raster,
            resolution,
        } => {
            if resolution < 2 {
                bail!("resolution must be at least 2");
            }
            let s = common.scenario()?;
            let sys = s.system()?;
            let d = &sys.domain;
            let step = |a: usize| d.extent(a) / (resolution - 1) as f64;
            let r = s
                .terrain()?
                .to_raster(d.lower[0], d.lower[1], step(0), step(1), resolution, resolution, sys.state_dim)?;
            let path = raster.unwrap_or_else(|| s.output_dir().join("terrain.trav"));
            r.save(&path)?;
            println!("wrote {}x{} raster to {}", resolution, resolution, path.display());
        }
    }
    eprintln!("done in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
