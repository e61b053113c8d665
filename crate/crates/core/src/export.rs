//! CSV writers for simulation, stability and kink outputs.

use std::io::Write;

use crate::ews::{fmt_f64, ProbeSeries};
use crate::mkdv::CoexistPoint;
use crate::simulate::{Snapshot, Trajectory};
use crate::stability::SweepPoint;

fn writer<W: Write>(w: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

/// `t_seconds,site,rho_star` for every recorded site and sample.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> csv::Result<()> {
    let mut out = writer(w, &["t_seconds", "site", "rho_star"])?;
    for (i, t) in traj.times.iter().enumerate() {
        for (site, series) in traj.sites.iter().zip(&traj.series) {
            out.write_record([fmt_f64(*t), site.to_string(), fmt_f64(series[i])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Full-field snapshots in the trajectory layout.
pub fn write_snapshots<W: Write>(w: W, snapshots: &[Snapshot]) -> csv::Result<()> {
    let mut out = writer(w, &["t_seconds", "site", "rho_star"])?;
    for snap in snapshots {
        for (j, v) in snap.field.iter().enumerate() {
            out.write_record([fmt_f64(snap.time), (j + 1).to_string(), fmt_f64(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `t_seconds,rho_star_mean_probe`.
pub fn write_probe<W: Write>(w: W, probe: &ProbeSeries) -> csv::Result<()> {
    let mut out = writer(w, &["t_seconds", "rho_star_mean_probe"])?;
    for (t, v) in probe.times.iter().zip(&probe.values) {
        out.write_record([fmt_f64(*t), fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

/// `x,y,neutral_a,w2,max_growth,verdict,kink_exists`. A missing neutral
/// point is written as `NA`.
pub fn write_sweep<W: Write>(w: W, points: &[SweepPoint]) -> csv::Result<()> {
    let mut out = writer(
        w,
        &[
            "x",
            "y",
            "neutral_a",
            "w2",
            "max_growth",
            "verdict",
            "kink_exists",
        ],
    )?;
    for p in points {
        out.write_record([
            fmt_f64(p.x),
            fmt_f64(p.y),
            p.neutral_a.map_or_else(|| "NA".into(), fmt_f64),
            fmt_f64(p.w2),
            fmt_f64(p.max_growth),
            if p.unstable { "unstable" } else { "stable" }.into(),
            p.kink_exists.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `rho_star,a_neutral`.
pub fn write_neutral_curve<W: Write>(w: W, curve: &[(f64, f64)]) -> csv::Result<()> {
    let mut out = writer(w, &["rho_star", "a_neutral"])?;
    for (r, a) in curve {
        out.write_record([fmt_f64(*r), fmt_f64(*a)])?;
    }
    out.flush()?;
    Ok(())
}

/// `rho_star,a,branch` with branch `+` or `-`.
pub fn write_coexisting<W: Write>(w: W, points: &[CoexistPoint]) -> csv::Result<()> {
    let mut out = writer(w, &["rho_star", "a", "branch"])?;
    for p in points {
        let branch = if p.branch > 0 { "+" } else { "-" };
        out.write_record([fmt_f64(p.rho_star), fmt_f64(p.a), branch.into()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-9, -4.2e7] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn coexisting_layout() {
        let pts = [
            CoexistPoint {
                rho_star: 0.25,
                a: 3.0,
                branch: 1,
            },
            CoexistPoint {
                rho_star: 0.15,
                a: 3.0,
                branch: -1,
            },
        ];
        let mut buf = Vec::new();
        write_coexisting(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rho_star,a,branch");
        assert!(lines[1].ends_with(",+") && lines[2].ends_with(",-"));
    }

    #[test]
    fn neutral_layout() {
        let mut buf = Vec::new();
        write_neutral_curve(&mut buf, &[(0.2, 3.92)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("rho_star,a_neutral"));
        assert_eq!(text.lines().count(), 2);
    }
}
