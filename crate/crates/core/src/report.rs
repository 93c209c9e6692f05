//! CSV output with 9 significant digits.

use std::io::Write;

use crate::oracle::{HarmonicSignal, SteadyState};
use crate::sim::Trajectory;

/// `x` with 9 significant digits, positional unless the exponent is
/// outside `[-5, 9)`, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(out: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_sig(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Column order of `escreg run`: `t, e, y, v*, z*, eta*, pi, vt*, u`.
pub fn trajectory_columns(traj: &Trajectory) -> Vec<String> {
    let mut head = vec!["t".to_string(), "e".into(), "y".into()];
    let group = |p: &str| {
        let mut g: Vec<String> = traj
            .names
            .iter()
            .filter(|n| n.strip_prefix(p).is_some_and(|r| r.parse::<usize>().is_ok()))
            .cloned()
            .collect();
        g.sort_by_key(|n| n[p.len()..].parse::<usize>().unwrap_or(0));
        g
    };
    head.extend(group("v"));
    head.extend(group("z"));
    head.extend(group("eta"));
    head.push("pi".into());
    head.extend(group("vt"));
    head.push("u".into());
    head
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> csv::Result<()> {
    let header = trajectory_columns(traj);
    let cols: Vec<&[f64]> = header[1..]
        .iter()
        .map(|n| traj.channel(n).expect("column present"))
        .collect();
    let rows = (0..traj.len()).map(|i| {
        let mut r = Vec::with_capacity(header.len());
        r.push(traj.times[i]);
        r.extend(cols.iter().map(|c| c[i]));
        r
    });
    write_csv(out, &header, rows)
}

/// One row per harmonic term: `signal, component, omega, cos, sin, amplitude`.
pub fn write_harmonics<W: Write>(out: W, ss: &SteadyState) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["signal", "component", "omega", "cos", "sin", "amplitude"])?;
    let signals: [(&str, &HarmonicSignal); 5] = [
        ("v", &ss.v_ss),
        ("z", &ss.z_ss),
        ("u", &ss.u_ss),
        ("theta", &ss.theta_ss),
        ("varpi", &ss.varpi_ss),
    ];
    for (name, sig) in signals {
        for term in sig.terms() {
            for c in 0..sig.dim() {
                let amp = term.cos[c].hypot(term.sin[c]);
                w.write_record([
                    name.to_string(),
                    (c + 1).to_string(),
                    fmt_sig(term.omega),
                    fmt_sig(term.cos[c]),
                    fmt_sig(term.sin[c]),
                    fmt_sig(amp),
                ])?;
            }
        }
    }
    for (i, r) in ss.varrho.iter().enumerate() {
        w.write_record([
            "varrho".to_string(),
            (i + 1).to_string(),
            "0".into(),
            fmt_sig(*r),
            "0".into(),
            fmt_sig(r.abs()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
