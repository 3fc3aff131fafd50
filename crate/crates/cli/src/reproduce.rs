//! Figure recipes: the solver and analysis commands whose outputs hold the
//! data of each figure, at desk scale.

use std::path::Path;

use clap::Parser;

use crate::manifest::{sha256_hex, RunManifest};
use crate::{execute, Cli, Outcome, ReproduceArgs, UsageError};

pub const FIGURES: &[&str] = &[
    "fig1", "fig2", "fig2a", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9",
];

const UV_G: &str = "0,0.5,1,1.5,2,2.5,3,3.5";
const IR_G: &str = "-0.5,-1,-2,-3";
const BULK_G: &str = "-0.375,-0.25,-0.125,0.125,0.25,0.375";

/// One step of a plan: the argument vector after `wavecool`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep(pub Vec<String>);

impl PlanStep {
    fn new(args: &[&str]) -> Self {
        Self(args.iter().map(|s| s.to_string()).collect())
    }

    /// Preset and run directory, for solver steps.
    fn run_target(&self) -> Option<(&str, &str)> {
        let a = &self.0;
        if a.len() < 2 || a[1] != "run" {
            return None;
        }
        let get = |flag: &str| a.iter().position(|x| x == flag).and_then(|i| a.get(i + 1));
        Some((get("--preset")?.as_str(), get("--out")?.as_str()))
    }
}

impl std::fmt::Display for PlanStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "wavecool {}", self.0.join(" "))
    }
}

/// Commands for `figure`, with run and report paths under `base`.
pub fn plan(figure: &str, base: &Path) -> Result<Vec<PlanStep>, UsageError> {
    let b = base.display().to_string();
    let dam_desk = format!("{b}/dam-desk");
    let dam_deep = format!("{b}/dam-deep");
    let nls = format!("{b}/nls-desk");
    let rep = |name: &str| format!("{b}/{figure}/{name}.csv");
    let dam_desk_run = PlanStep::new(&["dam", "run", "--preset", "dam-desk", "--out", &dam_desk]);
    let dam_deep_run = PlanStep::new(&["dam", "run", "--preset", "dam-deep", "--out", &dam_deep, "--fluxes", "final"]);
    let nls_run = PlanStep::new(&["nls", "run", "--preset", "nls-desk", "--out", &nls]);
    let analyze = |sub: &str, dir: &str, out: &str, extra: &[&str]| {
        let mut v = vec!["analyze", sub, "--in", dir, "--out", out];
        v.extend_from_slice(extra);
        PlanStep::new(&v)
    };
    let steps = match figure {
        "fig1" => vec![
            dam_desk_run,
            analyze("rj", &dam_desk, &rep("dam_rj"), &["--sigma", "0.4"]),
            analyze("fronts", &dam_desk, &rep("dam_fronts"), &["--sigma", "0.4", "--sigma-tilde", "0.4"]),
            nls_run,
            analyze("rj", &nls, &rep("nls_rj"), &["--sigma", "0.7"]),
            analyze("fronts", &nls, &rep("nls_fronts"), &["--sigma", "0.7"]),
        ],
        "fig2" | "fig2a" => {
            let (sd, sn) = if figure == "fig2" { ("0.4", "0.7") } else { ("0.2", "0.2") };
            vec![
                dam_deep_run,
                analyze("rj", &dam_deep, &rep("dam_rj"), &["--sigma", sd]),
                analyze("fronts", &dam_deep, &rep("dam_fronts"), &["--sigma", sd]),
                nls_run,
                analyze("rj", &nls, &rep("nls_rj"), &["--sigma", sn]),
                analyze("fronts", &nls, &rep("nls_fronts"), &["--sigma", sn]),
            ]
        }
        "fig3" => vec![
            dam_deep_run,
            analyze("rj", &dam_deep, &rep("dam_rj"), &["--sigma", "0.4"]),
            analyze("fronts", &dam_deep, &rep("dam_fronts"), &["--sigma", "0.4", "--sigma-tilde", "0.4"]),
            nls_run,
            analyze("rj", &nls, &rep("nls_rj"), &["--sigma", "0.7"]),
        ],
        "fig4" => vec![
            dam_deep_run,
            analyze("wg", &dam_deep, &rep("dam_wg"), &["--g", UV_G]),
            analyze("collapse", &dam_deep, &rep("dam_collapse"), &["--g", "3.5"]),
        ],
        "fig5" => vec![
            dam_deep_run,
            analyze("wg", &dam_deep, &rep("dam_wg"), &["--g", IR_G]),
            analyze("collapse", &dam_deep, &rep("dam_collapse"), &["--g", "-2"]),
        ],
        "fig6" => vec![
            dam_deep_run,
            analyze("wg", &dam_deep, &rep("dam_wg"), &["--g", BULK_G]),
            analyze("collapse", &dam_deep, &rep("dam_collapse"), &["--g", "-0.125"]),
        ],
        "fig7" => vec![
            nls_run,
            analyze("wg", &nls, &rep("nls_wg"), &["--g", UV_G]),
            analyze("collapse", &nls, &rep("nls_collapse"), &["--g", "3.5"]),
        ],
        "fig8" => vec![
            nls_run,
            analyze("wg", &nls, &rep("nls_wg"), &["--g", "-0.5,-0.375,-0.25,-0.125,0.125,0.25"]),
            analyze("collapse", &nls, &rep("nls_collapse"), &["--g", "-0.125"]),
        ],
        "fig9" => vec![PlanStep::new(&[
            "kernel", "scan", "--x-min", "-0.5", "--x-max", "2", "--step", "0.05", "--out", &rep("kernel_scan"),
        ])],
        other => {
            return Err(UsageError(format!(
                "unknown figure `{other}`; expected one of {}",
                FIGURES.join(", ")
            )))
        }
    };
    Ok(steps)
}

/// True when `dir` already holds a finished run of `preset`.
fn already_run(preset: &str, dir: &Path) -> bool {
    let Some(text) = wavecool_core::config::preset(preset) else {
        return false;
    };
    match RunManifest::read(dir) {
        Ok(m) => {
            m.config_sha256 == sha256_hex(text.as_bytes())
                && (m.status == "completed" || m.status == "boundary_reached")
                && m.verify(dir).is_ok()
        }
        Err(_) => false,
    }
}

pub fn reproduce(args: &ReproduceArgs) -> anyhow::Result<Outcome> {
    let steps = plan(&args.figure, &args.out)?;
    if !args.run {
        for s in &steps {
            println!("{s}");
        }
        return Ok(Outcome::Success);
    }
    for s in &steps {
        if let Some((preset, dir)) = s.run_target() {
            if already_run(preset, Path::new(dir)) {
                eprintln!("skip (finished run present): {s}");
                continue;
            }
        }
        eprintln!("{s}");
        let cli = Cli::try_parse_from(std::iter::once("wavecool".to_string()).chain(s.0.iter().cloned()))
            .map_err(|e| UsageError(e.to_string()))?;
        // a DAM run stopping at the grid boundary still produced its data
        execute(&cli)?;
    }
    Ok(Outcome::Success)
}
