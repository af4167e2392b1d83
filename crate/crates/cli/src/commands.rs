use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chanae_core::autodiff::{inject_backward_fault, Checkpoint};
use chanae_core::baselines::{qpsk_monte_carlo_seeded, snr_to_ebn0_db};
use chanae_core::experiment::{
    baseline_rows, ber_sweep, curve_rows, export_basis, export_signals, generate_dataset, study as run_study, train as
    run_train, write_ber_csv, write_history_csv, BerCurve, BerRow, StudyBase, StudyKind,
};
use chanae_core::gradsuite::{run_suite, SuiteConfig, TOLERANCE};
use chanae_core::{rng, BitFrame, Network};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Common, ExportWhat};

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

/// Records written files; serialized as `manifest.json`.
#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    files: Vec<ManifestEntry>,
    #[serde(skip)]
    dir: PathBuf,
}

impl Manifest {
    fn new(command: &'static str, dir: &Path) -> Self {
        Self {
            command,
            files: Vec::new(),
            dir: dir.to_path_buf(),
        }
    }

    fn add(&mut self, name: &str, kind: &'static str) -> PathBuf {
        self.files.push(ManifestEntry {
            path: name.to_string(),
            kind,
            label: None,
            value: None,
        });
        self.dir.join(name)
    }

    fn add_labeled(&mut self, name: &str, kind: &'static str, label: &str, value: f64) -> PathBuf {
        let p = self.add(name, kind);
        let last = self.files.last_mut().expect("just pushed");
        last.label = Some(label.to_string());
        last.value = Some(value);
        p
    }

    fn write(&self) -> Result<()> {
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

fn load_config(common: &Common, used: &[&str]) -> Result<(RunConfig, PathBuf)> {
    let path = common.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::read(path)?;
    cfg.resolve_seeds(common.seed, used);
    let out = cfg.out_dir(common.out.as_deref())?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn load_checkpoint(path: &Path) -> Result<Network> {
    let cp = Checkpoint::read(path)?;
    Network::from_checkpoint(&cp).with_context(|| format!("rebuilding network from {}", path.display()))
}

fn bits_per_sample(net: &Network) -> f64 {
    net.spec().arch.n_bits as f64 / net.spec().arch.samples() as f64
}

/// Model rows relabeled `model`, followed by the analytic baselines.
fn sweep_rows(curve: &BerCurve, net: &Network) -> Vec<BerRow> {
    let mut rows = curve_rows(curve);
    for r in &mut rows {
        r.label = "model".into();
    }
    let snr: Vec<f64> = curve.points.iter().map(|p| p.snr_db).collect();
    rows.extend(baseline_rows(&snr, bits_per_sample(net)));
    rows
}

pub fn train(common: &Common) -> Result<()> {
    let (cfg, out) = load_config(common, &["/init_seed", "/data/seed", "/train/seed"])?;
    let net = Network::build(cfg.network.clone(), cfg.init_seed)?;
    let data = generate_dataset(cfg.data.n_examples, cfg.network.arch.n_bits, cfg.data.seed)?;
    let trained = run_train(net, &data, &cfg.train)?;
    trained.network.to_checkpoint()?.save(&out.join("checkpoint.json"))?;
    write_history_csv(&out.join("history.csv"), &trained.history)?;
    let best = &trained.history.epochs[trained.history.best_epoch - 1];
    println!(
        "final validation loss {:.6e} (epoch {}, initial {:.6e})",
        best.val_loss, best.epoch, trained.history.initial_val_loss
    );
    Ok(())
}

pub fn sweep(common: &Common, checkpoint: &Path) -> Result<()> {
    let (cfg, out) = load_config(common, &["/sweep/seed"])?;
    let net = load_checkpoint(checkpoint)?;
    if net.spec().arch != cfg.network.arch {
        bail!(
            "checkpoint architecture {:?} does not match config network.arch {:?}",
            net.spec().arch,
            cfg.network.arch
        );
    }
    let curve = ber_sweep(&net, &cfg.network.channel, &cfg.sweep)?;
    write_ber_csv(&out.join("ber.csv"), &sweep_rows(&curve, &net))?;
    for p in &curve.points {
        println!(
            "snr {:>6} dB  ber {:.4e}  ({} / {}){}",
            p.snr_db,
            p.ber,
            p.bit_errors,
            p.bits_tested,
            if p.capped { "  capped" } else { "" }
        );
    }
    Ok(())
}

pub fn study(common: &Common, kind: Option<&str>, grid: Option<Vec<f64>>) -> Result<()> {
    let (cfg, out) = load_config(common, &["/init_seed", "/data/seed", "/train/seed", "/sweep/seed"])?;
    let kind: StudyKind = match (kind, &cfg.study) {
        (Some(k), _) => k.parse()?,
        (None, Some(s)) => s.kind,
        (None, None) => bail!("no study kind: pass --kind or set \"study.kind\""),
    };
    let grid = match (grid, &cfg.study) {
        (Some(g), _) => g,
        (None, Some(s)) => s.grid.clone(),
        (None, None) => bail!("no study grid: pass --grid or set \"study.grid\""),
    };
    if grid.is_empty() {
        bail!("study grid is empty");
    }
    let base = StudyBase {
        spec: cfg.network.clone(),
        init_seed: cfg.init_seed,
        data: generate_dataset(cfg.data.n_examples, cfg.network.arch.n_bits, cfg.data.seed)?,
        train: cfg.train.clone(),
        sweep: cfg.sweep.clone(),
    };
    let curves = run_study(kind, &grid, &base)?;
    let mut manifest = Manifest::new("study", &out);
    let mut family = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let ber = manifest.add_labeled(&format!("ber_{i:02}.csv"), "ber", &c.curve.label, c.value);
        write_ber_csv(&ber, &sweep_rows(&c.curve, &c.network))?;
        let hist = manifest.add_labeled(&format!("history_{i:02}.csv"), "history", &c.curve.label, c.value);
        write_history_csv(&hist, &c.history)?;
        let cp = manifest.add_labeled(&format!("checkpoint_{i:02}.json"), "checkpoint", &c.curve.label, c.value);
        c.network.to_checkpoint()?.save(&cp)?;
        family.extend(curve_rows(&c.curve));
        println!("{}: ber {:?}", c.curve.label, c.curve.points.iter().map(|p| p.ber).collect::<Vec<_>>());
    }
    let snr: Vec<f64> = cfg.sweep.snr_db.clone();
    family.extend(baseline_rows(&snr, bits_per_sample(&curves[0].network)));
    write_ber_csv(&manifest.add(&format!("study_{kind}.csv"), "family"), &family)?;
    manifest.write()
}

pub fn gradcheck(corrupt: bool) -> Result<bool> {
    inject_backward_fault(corrupt);
    let entries = run_suite(&SuiteConfig::default())?;
    let mut failed = Vec::new();
    for e in &entries {
        let status = if e.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:4} {:28} max_rel_error {:.3e}  ({} elements, {} probes)",
            e.name, e.report.max_rel_error, e.report.elements_checked, e.report.probes
        );
        if !e.passed() {
            failed.push(e.name);
        }
    }
    println!("{} checks, {} failed, tolerance {TOLERANCE:e}", entries.len(), failed.len());
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

pub fn baseline(common: &Common, monte_carlo_bits: Option<u64>) -> Result<()> {
    let (cfg, out) = load_config(common, &["/sweep/seed"])?;
    let arch = &cfg.network.arch;
    let bps = arch.n_bits as f64 / arch.samples() as f64;
    let mut rows = baseline_rows(&cfg.sweep.snr_db, bps);
    if let Some(n) = monte_carlo_bits {
        for (i, &s) in cfg.sweep.snr_db.iter().enumerate() {
            let mc = qpsk_monte_carlo_seeded(snr_to_ebn0_db(s, bps), n, rng::derive_seed(cfg.sweep.seed, i as u64))?;
            rows.push(BerRow {
                snr_db: s,
                bits_tested: mc.bits,
                bit_errors: mc.errors,
                ber: mc.ber(),
                label: "qpsk_simulated".into(),
            });
        }
    }
    write_ber_csv(&out.join("baseline.csv"), &rows)?;
    Ok(())
}

pub fn export(what: ExportWhat, common: &Common, checkpoint: &Path, snr_db: Option<f64>) -> Result<()> {
    let net = load_checkpoint(checkpoint)?;
    let out = match (&common.out, &common.config) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => RunConfig::read(c)?.out_dir(None)?,
        (None, None) => bail!("no output directory: pass --out"),
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = Manifest::new("export", &out);
    match what {
        ExportWhat::Basis => {
            let rows = export_basis(&net, &manifest.add("basis.csv", "basis"))?;
            println!("{} kernel rows of {} taps", rows.len(), rows[0].taps.len());
        }
        ExportWhat::Signals => {
            let seed = common.seed.unwrap_or_else(|| {
                eprintln!("warning: --seed not set, using 0");
                0
            });
            let mut channel = net.spec().channel.clone();
            if let Some(s) = snr_db {
                channel.snr_db = s;
            }
            let bits = BitFrame::random(net.spec().arch.n_bits, &mut rng::stream(seed, 0));
            let path = manifest.add("signals.csv", "signals");
            export_signals(&net, &bits, &channel, rng::derive_seed(seed, 1), &path)?;
        }
    }
    manifest.write()
}
