//! `dam run` and `nls run`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use wavecool_core::config::{parse_config, preset};
use wavecool_core::dam::{dam_fluxes, run_dam_with, DamStatus};
use wavecool_core::nls::{
    read_checkpoint, run_nls_with, write_checkpoint, NlsMember, NlsObserver, INVARIANTS_HEADER,
};
use wavecool_core::snapshot::write_snapshot;
use wavecool_core::{ConfigError, EnsembleSpectrum, InvariantRow, RunConfig, Spectrum};

use crate::manifest::{unix_now, RunManifest, CONFIG_FILE};
use crate::{ConfigSource, FluxOutput, Outcome, UsageError};

/// Raw config bytes (as stored and hashed) and the parsed configuration.
pub fn load_source(source: &ConfigSource) -> anyhow::Result<(Vec<u8>, RunConfig)> {
    let bytes = match (&source.config, &source.preset) {
        (Some(path), _) => fs::read(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?,
        (None, Some(name)) => preset(name)
            .ok_or_else(|| UsageError(format!("unknown preset `{name}`")))?
            .as_bytes()
            .to_vec(),
        (None, None) => return Err(UsageError("give --config or --preset".into()).into()),
    };
    let text = std::str::from_utf8(&bytes).map_err(|_| ConfigError::Parse {
        line: 0,
        message: "configuration is not valid UTF-8".into(),
    })?;
    let cfg = parse_config(text)?;
    Ok((bytes, cfg))
}

fn prepare(out: &Path, subdirs: &[&str], config: &[u8]) -> anyhow::Result<()> {
    for d in subdirs {
        let p = out.join(d);
        fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
    }
    let p = out.join(CONFIG_FILE);
    fs::write(&p, config).with_context(|| format!("writing {}", p.display()))
}

fn finish(mut m: RunManifest, out: &Path, status: &str, outputs: Vec<String>) -> anyhow::Result<()> {
    m.finished = unix_now();
    m.status = status.into();
    m.outputs = outputs;
    m.write(out)
}

fn fluxes_csv(s: &Spectrum) -> anyhow::Result<String> {
    let f = dam_fluxes(s)?;
    let mut text = String::from("omega,K,Q,P\n");
    for (i, w) in s.omega().iter().enumerate() {
        text.push_str(&format!("{w:.16e},{:.16e},{:.16e},{:.16e}\n", f.k[i], f.q[i], f.p[i]));
    }
    Ok(text)
}

pub fn dam_run(source: &ConfigSource, out: &Path, fluxes: FluxOutput) -> anyhow::Result<Outcome> {
    let (bytes, cfg) = load_source(source)?;
    let RunConfig::Dam(cfg) = cfg else {
        return Err(UsageError("`dam run` needs a configuration with model = dam".into()).into());
    };
    cfg.validate()?;
    prepare(out, &["snapshots", "fluxes"], &bytes)?;
    let manifest = RunManifest::new("dam run", &bytes, Vec::new());
    manifest.write(out)?;

    let mut outputs = vec![CONFIG_FILE.to_string()];
    let mut conserved = String::from("t,N,E\n");
    let mut failure: Option<anyhow::Error> = None;
    let mut last: Option<Spectrum> = None;
    let mut k = 0usize;
    let write_flux = |s: &Spectrum, outputs: &mut Vec<String>| -> anyhow::Result<()> {
        let name = format!("fluxes/fluxes_{:.6e}.csv", s.time());
        fs::write(out.join(&name), fluxes_csv(s)?).with_context(|| format!("writing {name}"))?;
        outputs.push(name);
        Ok(())
    };
    let result = run_dam_with(&cfg, |s, c| {
        if failure.is_some() {
            return;
        }
        let name = format!("snapshots/snapshot_{k:05}.csv");
        k += 1;
        conserved.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", s.time(), c.waveaction, c.energy));
        let r = write_snapshot(s, &out.join(&name))
            .map_err(anyhow::Error::from)
            .and_then(|_| {
                outputs.push(name.clone());
                outputs.push(name.replace(".csv", ".json"));
                match fluxes {
                    FluxOutput::All => write_flux(s, &mut outputs),
                    FluxOutput::Final => {
                        last = Some(s.clone());
                        Ok(())
                    }
                    FluxOutput::None => Ok(()),
                }
            });
        if let Err(e) = r {
            failure = Some(e);
        }
    });
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            finish(manifest, out, &format!("failed: {e}"), outputs)?;
            return Err(e.into());
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(s) = last {
        write_flux(&s, &mut outputs)?;
    }
    fs::write(out.join("conserved.csv"), conserved).context("writing conserved.csv")?;
    outputs.push("conserved.csv".into());
    eprintln!(
        "dam run: t = {:.6e} after {} steps ({} rhs evaluations)",
        summary.final_time, summary.steps, summary.rhs_evaluations
    );
    match summary.status {
        DamStatus::Completed => {
            finish(manifest, out, "completed", outputs)?;
            Ok(Outcome::Success)
        }
        DamStatus::BoundaryReached => {
            finish(manifest, out, "boundary_reached", outputs)?;
            Ok(Outcome::BoundaryReached)
        }
    }
}

/// Loads `member_*.ckpt` from a directory, or a single checkpoint file.
pub fn load_checkpoints(path: &Path) -> anyhow::Result<Vec<NlsMember>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("member_") && n.ends_with(".ckpt"))
            })
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(UsageError(format!("no member_*.ckpt files in {}", path.display())).into());
    }
    let mut members = files
        .iter()
        .map(|f| read_checkpoint(f))
        .collect::<Result<Vec<_>, _>>()?;
    members.sort_by_key(|m| m.id);
    Ok(members)
}

struct RunWriter<'a> {
    out: &'a Path,
    dt: f64,
    invariants: BufWriter<File>,
    outputs: Vec<String>,
    failure: Option<anyhow::Error>,
}

impl RunWriter<'_> {
    fn keep(&mut self, r: anyhow::Result<()>) {
        if let Err(e) = r {
            self.failure.get_or_insert(e);
        }
    }

    fn write_spectrum(&mut self, s: &EnsembleSpectrum) -> anyhow::Result<()> {
        let step = (s.time() / self.dt).round() as u64;
        let ens = format!("spectra/ensemble_{step:012}.csv");
        fs::write(self.out.join(&ens), s.to_csv()).with_context(|| format!("writing {ens}"))?;
        let side = ens.replace(".csv", ".json");
        let meta = serde_json::json!({
            "time": s.time(),
            "members": s.members(),
            "omega_min": s.grid().omega_min(),
            "omega_max": s.grid().omega_max(),
            "n_points": s.grid().len(),
            "omega_max_retained": s.omega_max(),
        });
        fs::write(self.out.join(&side), serde_json::to_string_pretty(&meta)?)?;
        let snap = format!("snapshots/snapshot_{step:012}.csv");
        write_snapshot(&s.to_spectrum()?, &self.out.join(&snap))?;
        for name in [ens, side, snap.clone(), snap.replace(".csv", ".json")] {
            if !self.outputs.contains(&name) {
                self.outputs.push(name);
            }
        }
        self.invariants.flush()?;
        Ok(())
    }

    fn write_members(&mut self, members: &[NlsMember]) -> anyhow::Result<()> {
        for m in members {
            let name = format!("checkpoints/member_{}.ckpt", m.id);
            // write then rename, so an interrupted run keeps the previous checkpoint
            let tmp = self.out.join(format!("{name}.tmp"));
            write_checkpoint(&tmp, m)?;
            fs::rename(&tmp, self.out.join(&name))?;
            if !self.outputs.contains(&name) {
                self.outputs.push(name);
            }
        }
        Ok(())
    }
}

impl NlsObserver for RunWriter<'_> {
    fn invariants(&mut self, row: &InvariantRow) {
        let r = writeln!(self.invariants, "{}", row.csv_line()).map_err(anyhow::Error::from);
        self.keep(r);
    }

    fn spectrum(&mut self, s: &EnsembleSpectrum) {
        let r = self.write_spectrum(s);
        self.keep(r);
    }

    fn checkpoint(&mut self, members: &[NlsMember]) {
        let r = self.write_members(members);
        self.keep(r);
    }
}

pub fn nls_run(source: &ConfigSource, out: &Path, resume: Option<&Path>) -> anyhow::Result<Outcome> {
    let (bytes, cfg) = load_source(source)?;
    let RunConfig::Nls(cfg) = cfg else {
        return Err(UsageError("`nls run` needs a configuration with model = nls".into()).into());
    };
    cfg.validate()?;
    let members = resume.map(load_checkpoints).transpose()?;
    prepare(out, &["snapshots", "spectra", "checkpoints"], &bytes)?;
    let seeds = (0..cfg.members as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let manifest = RunManifest::new("nls run", &bytes, seeds);
    manifest.write(out)?;

    let inv_path = out.join("invariants.csv");
    let append = members.is_some() && inv_path.exists();
    let file = if append {
        OpenOptions::new().append(true).open(&inv_path)
    } else {
        File::create(&inv_path)
    }
    .with_context(|| format!("opening {}", inv_path.display()))?;
    let mut writer = RunWriter {
        out,
        dt: cfg.dt,
        invariants: BufWriter::new(file),
        outputs: vec![CONFIG_FILE.to_string(), "invariants.csv".to_string()],
        failure: None,
    };
    if !append {
        writeln!(writer.invariants, "{INVARIANTS_HEADER}")?;
    }
    let result = run_nls_with(&cfg, members, &mut writer);
    writer.invariants.flush()?;
    let outputs = std::mem::take(&mut writer.outputs);
    if let Err(e) = result {
        finish(manifest, out, &format!("failed: {e}"), outputs)?;
        return Err(e.into());
    }
    if let Some(e) = writer.failure {
        return Err(e);
    }
    finish(manifest, out, "completed", outputs)?;
    Ok(Outcome::Success)
}
