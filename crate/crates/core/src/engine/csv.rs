//! Trajectory CSV: header `t,omega_1..omega_N,omega_b,omega_coi,err[,theta_1..theta_N]`,
//! one row per sample, floats with 17 significant digits. A line
//! `# stage <k> t=<time>` (stages counted from zero) precedes the first row of every stage after the first.

use std::io::{self, BufRead, Write};

use super::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub angles: bool,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W, opts: CsvOptions) -> io::Result<()> {
    let n = traj.n;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("omega_{i}")));
    header.extend(["omega_b", "omega_coi", "err"].map(String::from));
    if opts.angles {
        header.extend((1..=n).map(|i| format!("theta_{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut next_mark = 0;
    let mut row = Vec::with_capacity(header.len());
    for j in 0..traj.len() {
        if traj.stage_marks.get(next_mark) == Some(&j) {
            next_mark += 1;
            writeln!(w, "# stage {} t={}", next_mark, fmt(traj.times[j]))?;
        }
        row.clear();
        row.push(fmt(traj.times[j]));
        row.extend(traj.omega_at(j).iter().map(|&v| fmt(v)));
        row.push(fmt(traj.omega_b[j]));
        row.push(fmt(traj.omega_coi[j]));
        row.push(fmt(traj.err_at(j)));
        if opts.angles {
            row.extend(traj.theta_at(j).iter().map(|&v| fmt(v)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns of a trajectory CSV as read back from disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTrajectory {
    pub n: usize,
    pub times: Vec<f64>,
    /// Row-major `samples × N`.
    pub omega: Vec<f64>,
    pub omega_b: Vec<f64>,
    pub omega_coi: Vec<f64>,
    pub err: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub stage_marks: Vec<usize>,
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> io::Result<CsvTrajectory> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| invalid("empty file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("omega_") && c[6..].parse::<usize>().is_ok()).count();
    let angles = cols.iter().any(|c| c.starts_with("theta_"));
    let width = 1 + n + 3 + if angles { n } else { 0 };
    if cols.len() != width || cols[0] != "t" {
        return Err(invalid(format!("unexpected header '{header}'")));
    }
    let mut out = CsvTrajectory { n, theta: angles.then(Vec::new), ..Default::default() };
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.starts_with('#') {
            out.stage_marks.push(out.times.len());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("line {}: {e}", lineno + 2)))?;
        if vals.len() != width {
            return Err(invalid(format!("line {}: {} fields, expected {width}", lineno + 2, vals.len())));
        }
        out.times.push(vals[0]);
        out.omega.extend_from_slice(&vals[1..=n]);
        out.omega_b.push(vals[n + 1]);
        out.omega_coi.push(vals[n + 2]);
        out.err.push(vals[n + 3]);
        if let Some(th) = out.theta.as_mut() {
            th.extend_from_slice(&vals[n + 4..]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::FlowModel;

    #[test]
    fn round_trip_is_exact() {
        let traj = Trajectory {
            times: vec![0.0, 0.1, 80.0, 80.1],
            n: 2,
            theta: vec![0.1, -0.1, 1.0 / 3.0, -1.0 / 3.0, 0.5, -0.5, 0.25, -0.25],
            omega: vec![1e-300, 2.0, std::f64::consts::PI, -1.5, 0.1, 0.2, 0.3, 0.4],
            omega_b: vec![0.0, 0.5, 0.15, 0.35],
            omega_coi: vec![1.0, 0.5, 0.15, 0.35],
            stage_marks: vec![2],
            inertia: vec![1.0, 1.0],
            flow: FlowModel::Linear,
            network_fingerprint: 0,
            range_excursions: 0,
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf, CsvOptions { angles: true }).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,omega_1,omega_2,omega_b,omega_coi,err,theta_1,theta_2\n"));
        assert!(text.contains("# stage 1 t="));
        let back = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.omega, traj.omega);
        assert_eq!(back.theta.unwrap(), traj.theta);
        assert_eq!(back.err, traj.err());
        assert_eq!(back.stage_marks, vec![2]);
    }
}
