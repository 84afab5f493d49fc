use std::io::Write;

use sha2::{Digest, Sha256};

use super::integrate::Trajectory;
use crate::error::Result;

/// SHA-256 over a label and the bit patterns of the given arrays, used to tag
/// exported trajectories with the problem that produced them.
pub fn problem_hash(label: &str, parts: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        for v in *p {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Writes `t, x_1..x_n, v_1..v_n, residual, step` with a leading comment line
/// carrying the problem hash.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, hash: &str, mut out: W) -> Result<()> {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    writeln!(out, "# problem_hash={hash}")?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("v_{i}")));
    header.push("residual".into());
    header.push("step".into());
    writeln!(out, "{}", header.join(","))?;
    for s in &traj.samples {
        let mut row = vec![format!("{:.17e}", s.t)];
        row.extend(s.x.iter().map(|v| format!("{v:.17e}")));
        row.extend(s.v.iter().map(|v| format!("{v:.17e}")));
        row.push(format!("{:.6e}", s.residual));
        row.push(format!("{:.17e}", s.step));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;
    use crate::mirror_flow::{integrate, ConstantControl, QuadraticField, StepPolicy};

    #[test]
    fn csv_layout() {
        let k = Polyhedron::builder(2).boxed(-5.0, 5.0).build().unwrap();
        let traj = integrate(
            &k,
            &QuadraticField { n: 2 },
            &ConstantControl(vec![1.0, 0.0]),
            &[0.0, 0.0],
            &[],
            0.5,
            &StepPolicy::fixed(0.25),
        )
        .unwrap();
        let hash = problem_hash("box", &[&[1.0, 0.0]]);
        assert_eq!(hash.len(), 64);
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &hash, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# problem_hash={hash}"));
        assert_eq!(lines[1], "t,x_1,x_2,v_1,v_2,residual,step");
        assert_eq!(lines.len(), 2 + traj.samples.len());
        assert_ne!(problem_hash("box", &[&[1.0, 0.0]]), problem_hash("box", &[&[1.0], &[0.0]]));
    }
}
