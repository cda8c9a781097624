//! Float rendering and CSV emission shared by every subcommand.

use ionsim_core::stochastic::EnsembleResult;
use ionsim_core::types::Trajectory;
use std::fmt::Write as _;

/// 17 significant digits: enough to round-trip any f64, so parsing a written
/// file and re-emitting it is byte-identical.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_HEADER: &str = "t,re_rho00,im_rho00,re_rho01,im_rho01,re_rho10,im_rho10,\
                                     re_rho11,im_rho11,trace_defect,herm_defect,purity";

fn push_trajectory_row(out: &mut String, traj: &Trajectory, i: usize) {
    let t = traj.times()[i];
    let s = &traj.states()[i];
    let d = &traj.diagnostics()[i];
    let fields = [
        t,
        s.rho00.re,
        s.rho00.im,
        s.rho01.re,
        s.rho01.im,
        s.rho10.re,
        s.rho10.im,
        s.rho11.re,
        s.rho11.im,
        d.trace_defect,
        d.hermiticity_defect,
        d.purity,
    ];
    let row: Vec<String> = fields.iter().map(|v| format_float(*v)).collect();
    let _ = writeln!(out, "{}", row.join(","));
}

/// Trajectory CSV; `trailer` (when present) is appended as a `#` comment line,
/// used to record integration aborts.
pub fn trajectory_csv(traj: &Trajectory, trailer: Option<&str>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRAJECTORY_HEADER}");
    for i in 0..traj.len() {
        push_trajectory_row(&mut out, traj, i);
    }
    if let Some(message) = trailer {
        let _ = writeln!(out, "# aborted: {message}");
    }
    out
}

/// Mean-trajectory CSV with standard-error columns appended. A
/// single-realization ensemble has no sample variance; its stderr columns are
/// rendered as NaN to flag that explicitly.
pub fn ensemble_csv(result: &EnsembleResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRAJECTORY_HEADER},stderr_re_rho01,stderr_im_rho01");
    let traj = &result.mean;
    for i in 0..traj.len() {
        let t = traj.times()[i];
        let s = &traj.states()[i];
        let d = &traj.diagnostics()[i];
        let (se_re, se_im) = match &result.stderr {
            Some(se) => (se.re_rho01[i], se.im_rho01[i]),
            None => (f64::NAN, f64::NAN),
        };
        let fields = [
            t,
            s.rho00.re,
            s.rho00.im,
            s.rho01.re,
            s.rho01.im,
            s.rho10.re,
            s.rho10.im,
            s.rho11.re,
            s.rho11.im,
            d.trace_defect,
            d.hermiticity_defect,
            d.purity,
            se_re,
            se_im,
        ];
        let row: Vec<String> = fields.iter().map(|v| format_float(*v)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 0.5, 1.0 / 3.0, 4e-7, -2.5e-13, 1e8, f64::MIN_POSITIVE] {
            let rendered = format_float(x);
            let parsed: f64 = rendered.parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "{rendered}");
            assert_eq!(format_float(parsed), rendered);
        }
    }
}
