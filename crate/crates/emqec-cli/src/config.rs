//! Run configuration: structured key-value files (TOML) with an include
//! mechanism, hardware/timing presets mirroring the bundled tables, sweep
//! specifications and deterministic seeding.

use anyhow::{bail, Context, Result};
use emqec::noise::{hardware_set, HardwareParams, TimingParams};
use emqec::protocols::{DcRound2, ProtocolId, SimEnv};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Other config files merged underneath this one (depth-first).
    pub include: Option<Vec<String>>,
    pub protocol: Option<String>,
    pub hardware_set: Option<String>,
    pub hardware: Option<HardwareOverride>,
    pub alpha: Option<f64>,
    pub alpha_base: Option<f64>,
    pub alpha_distil: Option<f64>,
    pub pnr: Option<bool>,
    pub p: Option<f64>,
    pub p_sweep: Option<Vec<f64>>,
    pub alpha_sweep: Option<Vec<f64>>,
    pub coherence_sweep: Option<Vec<f64>>,
    pub hardware_set_sweep: Option<Vec<String>>,
    pub alpha_base_sweep: Option<Vec<f64>>,
    pub alpha_distil_sweep: Option<Vec<f64>>,
    pub coherence_time: Option<f64>,
    pub timing: Option<TimingOverride>,
    pub distances: Option<Vec<usize>>,
    pub rounds: Option<usize>,
    pub n_shots: Option<u64>,
    pub cutoff_percentile: Option<f64>,
    pub cutoff_scan: Option<CutoffScanSpec>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub dc_round2_strict: Option<bool>,
    pub layering: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareOverride {
    pub eta_ph: Option<f64>,
    pub mu_intensity: Option<f64>,
    pub f_prep: Option<f64>,
    pub p_de: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingOverride {
    pub t_link_coherence: Option<f64>,
    pub t_idle_coherence: Option<f64>,
    pub t_link: Option<f64>,
    pub t_meas: Option<f64>,
    pub t_pauli_comm: Option<f64>,
    pub t_pauli_mem: Option<f64>,
    pub t_two_qubit: Option<f64>,
    pub t_swap: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub struct CutoffScanSpec {
    pub lo: f64,
    pub hi: f64,
    pub budget: usize,
}

impl FileConfig {
    /// Load a config file, merging includes depth-first (later values win).
    pub fn load(path: &Path) -> Result<FileConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let mut base = FileConfig::default();
        if let Some(includes) = &cfg.include {
            let dir = path.parent().unwrap_or(Path::new("."));
            for inc in includes {
                let sub = Self::load(&dir.join(inc))?;
                base = base.merged(sub);
            }
        }
        Ok(base.merged(cfg))
    }

    fn merged(self, over: FileConfig) -> FileConfig {
        macro_rules! take {
            ($field:ident) => {
                over.$field.or(self.$field)
            };
        }
        FileConfig {
            include: None,
            protocol: take!(protocol),
            hardware_set: take!(hardware_set),
            hardware: take!(hardware),
            alpha: take!(alpha),
            alpha_base: take!(alpha_base),
            alpha_distil: take!(alpha_distil),
            pnr: take!(pnr),
            p: take!(p),
            p_sweep: take!(p_sweep),
            alpha_sweep: take!(alpha_sweep),
            coherence_sweep: take!(coherence_sweep),
            hardware_set_sweep: take!(hardware_set_sweep),
            alpha_base_sweep: take!(alpha_base_sweep),
            alpha_distil_sweep: take!(alpha_distil_sweep),
            coherence_time: take!(coherence_time),
            timing: take!(timing),
            distances: take!(distances),
            rounds: take!(rounds),
            n_shots: take!(n_shots),
            cutoff_percentile: take!(cutoff_percentile),
            cutoff_scan: take!(cutoff_scan),
            seed: take!(seed),
            out_dir: take!(out_dir),
            dc_round2_strict: take!(dc_round2_strict),
            layering: take!(layering),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub protocol: ProtocolId,
    pub es_name: String,
    pub hw: HardwareParams,
    pub timing: TimingParams,
    pub p: f64,
    pub p_sweep: Vec<f64>,
    pub alpha_sweep: Option<Vec<f64>>,
    pub coherence_sweep: Option<Vec<f64>>,
    pub hardware_set_sweep: Option<Vec<String>>,
    pub alpha_base_sweep: Option<Vec<f64>>,
    pub alpha_distil_sweep: Option<Vec<f64>>,
    pub distances: Vec<usize>,
    pub rounds: Option<usize>,
    pub n_shots: u64,
    pub cutoff_percentile: f64,
    pub cutoff_scan: Option<CutoffScanSpec>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dc_round2: DcRound2,
    pub layering: emqec::qec::TimeLayering,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, cli_overrides: CliOverrides) -> Result<RunConfig> {
        let protocol_name = file
            .protocol
            .clone()
            .unwrap_or_else(|| "dc_ghz".to_string());
        let protocol = ProtocolId::from_name(&protocol_name)
            .map_err(|e| anyhow::anyhow!("{e}; known: {:?}", ProtocolId::ALL.map(|p| p.name())))?;

        let es_name = file.hardware_set.clone().unwrap_or_else(|| "ES-2".to_string());
        let mut hw = hardware_set(&es_name).with_context(|| format!("hardware set {es_name}"))?;
        if let Some(over) = &file.hardware {
            if let Some(v) = over.eta_ph {
                hw.eta_ph = v;
            }
            if let Some(v) = over.mu_intensity {
                hw.mu_intensity = v;
            }
            if let Some(v) = over.f_prep {
                hw.f_prep = v;
            }
            if let Some(v) = over.p_de {
                hw.p_de = v;
            }
        }
        // bright-state defaults: 0.025 everywhere except the double-click
        // GHZ protocol, which is biased for alpha = 0.5
        let default_alpha = if protocol == ProtocolId::DcGhz { 0.5 } else { 0.025 };
        let alpha = file.alpha.unwrap_or(default_alpha);
        hw = hw.with_alpha(alpha);
        if let Some(ab) = file.alpha_base {
            hw.alpha_base = ab;
        }
        if let Some(ad) = file.alpha_distil {
            hw.alpha_distil = ad;
        }
        hw.pnr = cli_overrides.pnr.or(file.pnr).unwrap_or(true);
        hw.validate()?;

        let mut timing = TimingParams::default();
        if let Some(t) = file.coherence_time {
            timing = timing.with_coherence(t);
        }
        if let Some(over) = &file.timing {
            macro_rules! set {
                ($f:ident) => {
                    if let Some(v) = over.$f {
                        timing.$f = v;
                    }
                };
            }
            set!(t_link_coherence);
            set!(t_idle_coherence);
            set!(t_link);
            set!(t_meas);
            set!(t_pauli_comm);
            set!(t_pauli_mem);
            set!(t_two_qubit);
            set!(t_swap);
        }
        timing.validate()?;

        let distances = file.distances.clone().unwrap_or_else(|| vec![4, 6, 8]);
        for &d in &distances {
            if d < 4 || d % 2 != 0 {
                bail!("distance {d} must be even and at least 4");
            }
        }
        let p = file.p.unwrap_or(1e-3);
        let p_sweep = file.p_sweep.clone().unwrap_or_else(|| vec![p]);
        let cutoff = file.cutoff_percentile.unwrap_or(0.99);
        if !(0.0 < cutoff && cutoff <= 1.0) {
            bail!("cutoff percentile {cutoff} outside (0, 1]");
        }
        let layering = match file.layering.as_deref() {
            None | Some("per_cycle") => emqec::qec::TimeLayering::PerCycle,
            Some("per_sub_round") => emqec::qec::TimeLayering::PerSubRound,
            Some(other) => bail!("unknown layering `{other}`"),
        };
        Ok(RunConfig {
            protocol,
            es_name,
            hw,
            timing,
            p,
            p_sweep,
            alpha_sweep: file.alpha_sweep,
            coherence_sweep: file.coherence_sweep,
            hardware_set_sweep: file.hardware_set_sweep,
            alpha_base_sweep: file.alpha_base_sweep,
            alpha_distil_sweep: file.alpha_distil_sweep,
            distances,
            rounds: file.rounds,
            n_shots: cli_overrides.shots.or(file.n_shots).unwrap_or(10_000),
            cutoff_percentile: cutoff,
            cutoff_scan: file.cutoff_scan,
            seed: cli_overrides.seed.or(file.seed).unwrap_or(1),
            out_dir: cli_overrides
                .out
                .or(file.out_dir.map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out")),
            dc_round2: if file.dc_round2_strict.unwrap_or(false) {
                DcRound2::PairsOnly
            } else {
                DcRound2::WithBunching
            },
            layering,
        })
    }

    pub fn env(&self) -> SimEnv {
        self.env_at(self.p)
    }

    pub fn env_at(&self, p: f64) -> SimEnv {
        let mut env = SimEnv::new(self.hw, self.timing, p);
        env.dc_round2 = self.dc_round2;
        env
    }
}

#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub shots: Option<u64>,
    pub pnr: Option<bool>,
}
