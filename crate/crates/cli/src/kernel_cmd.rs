//! `kernel scan` and `kernel eval`.

use std::path::Path;

use anyhow::Context;
use wavecool_core::kernel::{convergence_window, kernel_s, Region};
use wavecool_core::Quartet;

use crate::{Outcome, UsageError};

pub fn scan_csv(x_min: f64, x_max: f64, step: f64) -> anyhow::Result<(String, String)> {
    if !(step > 0.0 && x_max >= x_min) {
        return Err(UsageError(format!(
            "need x_min <= x_max and step > 0, got [{x_min}, {x_max}] step {step}"
        ))
        .into());
    }
    let w = convergence_window(x_min, x_max, step)?;
    let mut s = String::from("x,region,measured,predicted,r_squared,identically_zero,convergent\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for (i, &x) in w.xs.iter().enumerate() {
        for r in w.scans.iter().filter(|r| r.x == x) {
            s.push_str(&format!(
                "{x},{},{},{},{:.6},{},{}\n",
                r.region.tag(),
                opt(r.measured),
                opt(r.predicted),
                r.r_squared,
                r.identically_zero,
                r.convergent
            ));
        }
        s.push_str(&format!("{x},all,,,,,{}\n", w.convergent[i]));
    }
    let mut summary = format!(
        "convergence window: {}\n",
        w.interval.map_or("none".to_string(), |i| i.to_string())
    );
    if !w.isolated.is_empty() {
        summary.push_str(&format!("isolated convergent points: {:?}\n", w.isolated));
    }
    for r in Region::ALL {
        summary.push_str(&format!(
            "region ({}): {}\n",
            r.tag(),
            w.region_interval(r).map_or("none".to_string(), |i| i.to_string())
        ));
    }
    Ok((s, summary))
}

pub fn scan(x_min: f64, x_max: f64, step: f64, out: &Path) -> anyhow::Result<Outcome> {
    let (csv, summary) = scan_csv(x_min, x_max, step)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    print!("{summary}");
    Ok(Outcome::Success)
}

pub fn eval(quartet: &[f64]) -> anyhow::Result<Outcome> {
    let &[w, w1, w2] = quartet else {
        return Err(UsageError("--quartet takes omega,omega1,omega2".into()).into());
    };
    let q = Quartet::new(w, w1, w2)?;
    let k = kernel_s(&q)?;
    println!("S1,q,K,S");
    println!("{:.16e},{:.16e},{:.16e},{:.16e}", k.s1, k.q, k.k_of_q, k.s);
    Ok(Outcome::Success)
}
