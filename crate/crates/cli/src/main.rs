//! `waveinv` command line: solve, linearize, probe, ray, sweep, validate.
//!
//! Exit status: 0 on success, 1 on domain or numerical failure, 2 on
//! configuration errors (including usage errors reported by clap).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use waveinv::linearization::{linearize, response, u123_direct};
use waveinv::par;
use waveinv::pipeline::{run_stability_sweep, site_setup, write_outputs, ErrorRecord, ExperimentConfig};
use waveinv::raytransform::{lipschitz_bound, sup_discrepancy, RaySummary};
use waveinv::{recover_h_difference, sobolev_norm, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "waveinv", version, about = "Inverse-problem laboratory for □u + Vu + hu³ = f")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Experiment config (JSON, schema 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "waveinv-out")]
    out: PathBuf,
    /// Dotted-key override, e.g. `grid.n_space=65` (repeatable).
    #[arg(long = "override", global = true, value_name = "K=V")]
    overrides: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "WAVEINV_THREADS")]
    threads: Option<usize>,
    /// Print a machine-readable JSON record on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Verb {
    /// Reference-model response to the first site's three sources.
    Solve,
    /// Threefold linearization at the first site, checked against the direct cascade.
    Linearize,
    /// h-channel probe at every site (direct cascades of both models).
    Probe,
    /// Light-ray discrepancy of the two potentials and the pointwise bound.
    Ray,
    /// Full stability sweep: report.json, report.csv, plots.gp, timings.json.
    Sweep,
    /// Schema and invariant checks only; no solves.
    Validate,
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Value> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load_with_overrides(path, &cli.overrides)?;
    cfg.validate()?;
    let out = &cli.out;
    match cli.verb {
        Verb::Validate => Ok(json!({ "valid": true, "sites": cfg.sites.len(), "rows": cfg.delta_ladder.len() })),
        Verb::Solve => {
            let grid = cfg.grid.build(&cfg.dom)?;
            let site = site_setup(&cfg, &grid, 0)?;
            let u = response(&cfg.model_ref, &site.set.with_eps([site.eps_ref; 3]), [true; 3], &site.obs)?;
            let k = grid.time_range(site.probe.z.t(), site.probe.z.t()).0;
            std::fs::create_dir_all(out)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("u_slice.csv"))?);
            u.write_slice_csv(k, &mut w)?;
            let v = json!({
                "n_space": grid.n_space,
                "n_time": grid.n_time,
                "eps": site.eps_ref,
                "slice_t": grid.t(k),
                "max_abs": u.max_abs(),
                "norm": sobolev_norm(&u, cfg.norm_order, &site.obs.region)?,
            });
            write_json(out, "solve.json", &v)?;
            Ok(v)
        }
        Verb::Linearize => {
            let grid = cfg.grid.build(&cfg.dom)?;
            let site = site_setup(&cfg, &grid, 0)?;
            let r = linearize(&cfg.model_ref, &site.set.with_eps([site.eps_ref; 3]), &site.obs, true)?;
            let v = serde_json::to_value(&r.diagnostics)?;
            write_json(out, "linearize.json", &v)?;
            Ok(v)
        }
        Verb::Probe => {
            let grid = cfg.grid.build(&cfg.dom)?;
            let mut sites = vec![];
            for i in 0..cfg.sites.len() {
                let site = site_setup(&cfg, &grid, i)?;
                let ua = u123_direct(&cfg.model_ref, &site.set, &site.obs)?;
                let ub = u123_direct(&cfg.model_alt, &site.set, &site.obs)?;
                let rec = recover_h_difference(&cfg.model_ref, &site.cfg, &site.probe, &ua, &ub)?;
                let y = site.cfg.y;
                sites.push(json!({
                    "y": y,
                    "h_recovered": rec.value,
                    "h_true": cfg.model_ref.h.eval(&y) - cfg.model_alt.h.eval(&y),
                    "beta": [rec.beta.re, rec.beta.im],
                }));
            }
            let v = json!({ "sites": sites });
            write_json(out, "probe.json", &v)?;
            Ok(v)
        }
        Verb::Ray => {
            let mut s = cfg.ray_sampling();
            s.keep_samples = true;
            let rep = sup_discrepancy(&cfg.model_ref.v, &cfg.model_alt.v, &cfg.dom, &s)?;
            let step = cfg.lipschitz_step;
            let m = lipschitz_bound(&cfg.model_ref.v, &cfg.dom, 2, step).max(lipschitz_bound(&cfg.model_alt.v, &cfg.dom, 2, step));
            std::fs::create_dir_all(out)?;
            rep.write_csv(&out.join("rays.csv"))?;
            let v = serde_json::to_value(RaySummary::new(&rep, m)?)?;
            write_json(out, "ray.json", &v)?;
            Ok(v)
        }
        Verb::Sweep => {
            let (report, timings) = run_stability_sweep(&cfg)?;
            write_outputs(&report, &timings, out)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            Ok(json!({ "rows": report.rows.len(), "failed_rows": failed, "out": out }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match par::with_threads(cli.threads, || run(&cli)) {
        Ok(v) => {
            if cli.json {
                println!("{}", json!({ "status": "ok", "result": v }));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code: u8 = if e.is_config() { 2 } else { 1 };
            eprintln!("waveinv: {e}");
            let rec = ErrorRecord::from(&e);
            let v = json!({ "status": "error", "exit_code": code, "kind": rec.kind, "message": rec.message });
            if code == 1 {
                let _ = write_json(&cli.out, "error.json", &v);
            }
            if cli.json {
                println!("{v}");
            }
            ExitCode::from(code)
        }
    }
}
