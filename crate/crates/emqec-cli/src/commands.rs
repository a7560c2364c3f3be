//! Subcommand implementations: protocol sweeps, table export, logical-rate
//! grids, threshold fits and the end-to-end pipeline.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use emqec::fit::{fit_threshold, optimize_cutoff, CutoffEval, DataPoint, FitError, FitResult};
use emqec::noise::hardware_set;
use emqec::protocols::{generation_model, run_protocol, table_i_oracle, ProtocolId};
use emqec::qec::{logical_error_rate, QecConfig, QecRunner};
use emqec::superop::{build_table_from_model, export_table, import_table, SuperoperatorTable};
use std::io::Write;
use std::path::{Path, PathBuf};

const RESULT_HEADER: &str = "schema,protocol,es_set,alpha,alpha_base,alpha_distil,eta_ph,mu_intensity,f_prep,p_de,pnr,t_coh_link,t_coh_idle,p,n_shots,seed,p_succ,fidelity,infidelity,mean_attempts,ghz_time";

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}

fn result_row(cfg: &RunConfig, env: &emqec::protocols::SimEnv, es: &str, r: &emqec::protocols::ProtocolResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        emqec::SCHEMA_VERSION,
        cfg.protocol.name(),
        es,
        env.hw.alpha,
        env.hw.alpha_base,
        env.hw.alpha_distil,
        env.hw.eta_ph,
        env.hw.mu_intensity,
        env.hw.f_prep,
        env.hw.p_de,
        env.hw.pnr,
        env.timing.t_link_coherence,
        env.timing.t_idle_coherence,
        env.p,
        cfg.n_shots,
        cfg.seed,
        r.success_prob,
        r.fidelity,
        1.0 - r.fidelity,
        r.attempts.mean,
        r.ghz_time,
    )
}

/// Protocol sweep over bright-state parameters, coherence times, hardware
/// sets or dual-alpha grids; one denormalized CSV row per point.
pub fn cmd_protocols(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("protocols_{}.csv", cfg.protocol.name()));
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "{RESULT_HEADER}")?;

    // build the list of sweep environments
    let mut envs: Vec<(String, emqec::protocols::SimEnv)> = Vec::new();
    let base_env = cfg.env();
    if let Some(alphas) = &cfg.alpha_sweep {
        for &a in alphas {
            let mut env = base_env.clone();
            env.hw = env.hw.with_alpha(a);
            envs.push((cfg.es_name.clone(), env));
        }
    }
    if let Some(ts) = &cfg.coherence_sweep {
        for &t in ts {
            let mut env = base_env.clone();
            env.timing = env.timing.with_coherence(t);
            envs.push((cfg.es_name.clone(), env));
        }
    }
    if let Some(sets) = &cfg.hardware_set_sweep {
        for name in sets {
            let mut env = base_env.clone();
            let hw = hardware_set(name)?;
            env.hw.eta_ph = hw.eta_ph;
            env.hw.mu_intensity = hw.mu_intensity;
            env.hw.f_prep = hw.f_prep;
            env.hw.p_de = hw.p_de;
            envs.push((name.clone(), env));
        }
    }
    if let (Some(bases), Some(distils)) = (&cfg.alpha_base_sweep, &cfg.alpha_distil_sweep) {
        for &ab in bases {
            for &ad in distils {
                let mut env = base_env.clone();
                env.hw.alpha_base = ab;
                env.hw.alpha_distil = ad;
                envs.push((cfg.es_name.clone(), env));
            }
        }
    }
    if envs.is_empty() {
        envs.push((cfg.es_name.clone(), base_env));
    }

    for (es, env) in &envs {
        let r = run_protocol(cfg.protocol, env, cfg.n_shots, cfg.seed)?;
        writeln!(f, "{}", result_row(cfg, env, es, &r))?;
    }
    Ok(path)
}

/// Closed-form oracle rows for the elementary and optical protocols.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("oracle.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "schema,protocol,alpha,pnr,success,fidelity")?;
    let alphas = cfg
        .alpha_sweep
        .clone()
        .unwrap_or_else(|| vec![0.01, 0.025, 0.1, 0.25, 0.5, 0.9]);
    for id in ProtocolId::ALL {
        if id.is_memory_distillation() {
            continue;
        }
        for &a in &alphas {
            for pnr in [true, false] {
                let v = table_i_oracle(id, a, pnr)?;
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    emqec::SCHEMA_VERSION,
                    id.name(),
                    a,
                    pnr,
                    v.success,
                    v.fidelity.map(|x| x.to_string()).unwrap_or_default()
                )?;
            }
        }
    }
    Ok(path)
}

/// Build and export the superoperator table at the configured cut-off.
pub fn cmd_table(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    let env = cfg.env();
    let model = generation_model(cfg.protocol, &env, cfg.seed)?;
    let table = build_table_from_model(cfg.protocol, &env, &model, cfg.cutoff_percentile, cfg.seed)?;
    let path = cfg.out_dir.join(format!(
        "table_{}_p{:.6}_x{:.4}.csv",
        cfg.protocol.name(),
        cfg.p,
        cfg.cutoff_percentile
    ));
    export_table(&table, &path)?;
    Ok(path)
}

/// Logical-error-rate grid from a prebuilt table CSV.
pub fn cmd_qec(cfg: &RunConfig, table_path: &Path) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    let table = import_table(table_path)?;
    let out = cfg.out_dir.join("qec_rates.csv");
    let mut f = std::fs::File::create(&out)?;
    writeln!(f, "schema,p,d,n_shots,failures,p_l,sigma")?;
    for &d in &cfg.distances {
        let row = qec_point(cfg, &table, d)?;
        writeln!(f, "{row}")?;
    }
    Ok(out)
}

fn qec_point(cfg: &RunConfig, table: &SuperoperatorTable, d: usize) -> Result<String> {
    let mut qc = QecConfig::new(d);
    if let Some(r) = cfg.rounds {
        qc.rounds = r;
    }
    qc.layering = cfg.layering;
    let runner = QecRunner::new(qc, table)?;
    let (p_l, sigma, failures) = logical_error_rate(&runner, cfg.n_shots, cfg.seed);
    Ok(format!(
        "{},{},{},{},{},{},{}",
        emqec::SCHEMA_VERSION,
        table.meta.p,
        d,
        cfg.n_shots,
        failures,
        p_l,
        sigma
    ))
}

/// Threshold fit from a logical-rate CSV produced by `qec`/`pipeline`.
pub fn cmd_fit(cfg: &RunConfig, rates_path: &Path) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    let points = read_rate_csv(rates_path)?;
    let fit = fit_threshold(&points, None)?;
    let out = cfg.out_dir.join("fit_report.json");
    write_fit_report(&out, &fit, cfg)?;
    Ok(out)
}

pub fn read_rate_csv(path: &Path) -> Result<Vec<DataPoint>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading rates {}", path.display()))?;
    let mut lines = raw.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("schema,") {
        bail!("unrecognized rate CSV header: {header}");
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 7 {
            bail!("malformed rate row {}", i + 2);
        }
        if cols[0] != emqec::SCHEMA_VERSION {
            bail!("unknown schema version `{}`", cols[0]);
        }
        let p: f64 = cols[1].parse()?;
        let d: usize = cols[2].parse()?;
        let shots: u64 = cols[3].parse()?;
        let failures: u64 = cols[4].parse()?;
        points.push(DataPoint {
            p,
            d,
            successes: shots - failures,
            shots,
        });
    }
    Ok(points)
}

fn write_fit_report(path: &Path, fit: &FitResult, cfg: &RunConfig) -> Result<()> {
    let report = serde_json::json!({
        "schema": emqec::SCHEMA_VERSION,
        "protocol": cfg.protocol.name(),
        "hardware_set": cfg.es_name,
        "pnr": cfg.hw.pnr,
        "seed": cfg.seed,
        "cutoff_percentile": cfg.cutoff_percentile,
        "fit": fit,
    });
    std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

/// End-to-end: per gate-error rate build the table, run the QEC grid,
/// then fit the threshold. With a `cutoff_scan` the whole pipeline runs
/// per percentile and the best threshold is reported.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.out_dir)?;
    if cfg.distances.len() < 3 {
        bail!("threshold pipeline needs at least 3 distances");
    }
    if cfg.p_sweep.len() < 4 {
        bail!("threshold pipeline needs at least 4 gate-error rates");
    }
    let report_path = cfg.out_dir.join("pipeline_report.json");
    if let Some(scan_spec) = cfg.cutoff_scan {
        let eval = |x: f64| -> std::result::Result<CutoffEval, FitError> {
            let (points, _) = pipeline_points(cfg, x)
                .map_err(|e| FitError::Simulation(e.to_string()))?;
            // early rejection: discard percentiles where every tested p is
            // deep above threshold
            if points
                .iter()
                .all(|pt| 1.0 - pt.rate() > 0.80)
            {
                return Ok(CutoffEval::NoThreshold);
            }
            fit_threshold(&points, None).map(CutoffEval::Fit)
        };
        let scan = optimize_cutoff(eval, (scan_spec.lo, scan_spec.hi), scan_spec.budget)?;
        let report = serde_json::json!({
            "schema": emqec::SCHEMA_VERSION,
            "protocol": cfg.protocol.name(),
            "hardware_set": cfg.es_name,
            "pnr": cfg.hw.pnr,
            "scan": scan,
        });
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
        return Ok(report_path);
    }

    let (points, rate_rows) = pipeline_points(cfg, cfg.cutoff_percentile)?;
    let rates_path = cfg.out_dir.join("qec_rates.csv");
    let mut f = std::fs::File::create(&rates_path)?;
    writeln!(f, "schema,p,d,n_shots,failures,p_l,sigma")?;
    for row in &rate_rows {
        writeln!(f, "{row}")?;
    }
    drop(f);
    let fit = fit_threshold(&points, None)?;
    write_fit_report(&report_path, &fit, cfg)?;
    Ok(report_path)
}

/// Simulate the full (p, d) grid at a given cut-off percentile.
pub fn pipeline_points(cfg: &RunConfig, x: f64) -> Result<(Vec<DataPoint>, Vec<String>)> {
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &p in &cfg.p_sweep {
        let env = cfg.env_at(p);
        let model = generation_model(cfg.protocol, &env, cfg.seed)?;
        let table = build_table_from_model(cfg.protocol, &env, &model, x, cfg.seed)?;
        let table_path = cfg.out_dir.join(format!(
            "table_{}_p{:.6}_x{:.4}.csv",
            cfg.protocol.name(),
            p,
            x
        ));
        export_table(&table, &table_path)?;
        for &d in &cfg.distances {
            let row = qec_point(cfg, &table, d)?;
            let cols: Vec<&str> = row.split(',').collect();
            let failures: u64 = cols[4].parse()?;
            points.push(DataPoint {
                p,
                d,
                successes: cfg.n_shots - failures,
                shots: cfg.n_shots,
            });
            rows.push(row);
        }
    }
    Ok((points, rows))
}
