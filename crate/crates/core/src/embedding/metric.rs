use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::offline_opt::DistanceMatrix;

/// Allowed violation of the triangle inequality after normalisation.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// A finite metric space rescaled to diameter 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetric {
    d: Vec<Vec<f64>>,
    /// Diameter before rescaling.
    scale: f64,
    min_dist: f64,
}

impl FiniteMetric {
    /// Normalises a symmetric distance matrix with zero diagonal and positive
    /// off-diagonal entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return invalid("a metric needs at least two points");
        }
        let mut diam = 0.0f64;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return invalid(format!("row {i} has {} entries, expected {n}", r.len()));
            }
            if r[i] != 0.0 {
                return invalid(format!("d({i},{i}) is not zero"));
            }
            for (j, &v) in r.iter().enumerate() {
                if i != j && !(v > 0.0 && v.is_finite()) {
                    return invalid(format!("d({i},{j}) = {v} must be positive and finite"));
                }
                if (v - rows[j][i]).abs() > TRIANGLE_TOL * v.max(1.0) {
                    return invalid(format!("distances d({i},{j}) and d({j},{i}) differ"));
                }
                diam = diam.max(v);
            }
        }
        let d: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v / diam).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if d[i][j] > d[i][l] + d[l][j] + TRIANGLE_TOL {
                        return invalid(format!("triangle inequality fails for ({i},{l},{j})"));
                    }
                }
            }
        }
        let min_dist = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| d[i][j])
            .fold(f64::INFINITY, f64::min);
        Ok(Self { d, scale: diam, min_dist })
    }

    /// Points in `ℝ^m` under the `ℓ1` (`p = 1`) or `ℓ2` (`p = 2`) norm.
    pub fn from_points(points: &[Vec<f64>], p: u32) -> Result<Self> {
        if p != 1 && p != 2 {
            return invalid("only l1 and l2 point metrics are supported");
        }
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            if p == 1 {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
            } else {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        };
        if let Some(q) = points.iter().find(|q| q.len() != points[0].len()) {
            return invalid(format!("point {q:?} has the wrong dimension"));
        }
        let rows: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dist(a, b)).collect()).collect();
        Self::from_rows(&rows)
    }

    /// `n` uniform points in the unit cube of dimension `dim` under `ℓ2`.
    pub fn random_euclidean<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
        Self::from_points(&pts, 2)
    }

    /// Reads either `n` followed by the `n(n−1)/2` upper-triangle distances,
    /// or a norm tag `l1`/`l2` followed by one point per line. `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()).collect();
        let Some(first) = lines.first() else {
            return Err(Error::Parse("empty metric file".into()));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")));
        match *first {
            "l1" | "l2" => {
                let p = if *first == "l1" { 1 } else { 2 };
                let pts = lines[1..]
                    .iter()
                    .map(|l| l.split_whitespace().map(num).collect::<Result<Vec<f64>>>())
                    .collect::<Result<Vec<_>>>()?;
                Self::from_points(&pts, p)
            }
            _ => {
                let mut tok = lines.iter().flat_map(|l| l.split_whitespace());
                let n: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("metric file must start with n, l1 or l2".into()))?;
                let vals = tok.map(num).collect::<Result<Vec<f64>>>()?;
                if vals.len() != n * n.saturating_sub(1) / 2 {
                    return Err(Error::Parse(format!("expected {} distances, found {}", n * (n - 1) / 2, vals.len())));
                }
                let mut rows = vec![vec![0.0; n]; n];
                let mut it = vals.into_iter();
                for i in 0..n {
                    for j in i + 1..n {
                        let v = it.next().expect("counted above");
                        rows[i][j] = v;
                        rows[j][i] = v;
                    }
                }
                Self::from_rows(&rows)
            }
        }
    }

    /// The upper-triangle text format read by [`FiniteMetric::parse`], in
    /// normalised units.
    pub fn to_text(&self) -> String {
        let n = self.len();
        let mut s = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (i + 1..n).map(|j| format!("{}", self.d[i][j])).collect();
            if !row.is_empty() {
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.d
    }

    /// Diameter of the input before normalisation.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn min_distance(&self) -> f64 {
        self.min_dist
    }

    pub fn aspect_ratio(&self) -> f64 {
        1.0 / self.min_dist
    }

    /// Smallest `M` with `τ^{−M} < d(x,y)` for all `x ≠ y`.
    pub fn scale_count(&self, tau: f64) -> usize {
        let mut m = 0;
        while tau.powi(-(m as i32)) >= self.min_dist {
            m += 1;
        }
        m
    }

    /// `d(x, S)`, infinite for empty `S`.
    pub fn dist_to_set(&self, x: usize, set: impl IntoIterator<Item = usize>) -> f64 {
        set.into_iter().map(|c| self.d[x][c]).fold(f64::INFINITY, f64::min)
    }

    pub fn diameter_of(&self, set: &[usize]) -> f64 {
        let mut m = 0.0f64;
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                m = m.max(self.d[i][j]);
            }
        }
        m
    }

    pub fn distance_matrix(&self) -> Result<DistanceMatrix> {
        DistanceMatrix::from_rows(&self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn normalises_and_counts_scales() {
        let m = FiniteMetric::from_points(&[vec![0.0], vec![1.0], vec![4.0]], 1).unwrap();
        assert_eq!(m.get(0, 2), 1.0);
        assert_eq!(m.get(0, 1), 0.25);
        assert_eq!(m.scale(), 4.0);
        // 4^{-1} = 0.25 is not below 0.25, 4^{-2} is.
        assert_eq!(m.scale_count(4.0), 2);
        assert_eq!(m.aspect_ratio(), 4.0);
    }

    #[test]
    fn parse_formats() {
        let a = FiniteMetric::parse("# three points\n3\n1 2\n1\n").unwrap();
        assert_eq!(a.get(0, 2), 1.0);
        assert_eq!(a.get(1, 2), 0.5);
        let b = FiniteMetric::parse("l2\n0 0\n3 4\n0 4\n").unwrap();
        assert_eq!(b.get(0, 1), 1.0);
        assert_eq!(FiniteMetric::parse(&a.to_text()).unwrap().rows(), a.rows());
        assert!(FiniteMetric::parse("3\n1 5\n1\n").is_err());
        assert!(FiniteMetric::parse("3\n1 2\n").is_err());
        assert!(FiniteMetric::parse("x\n").is_err());
    }

    #[test]
    fn random_euclidean_is_a_metric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = FiniteMetric::random_euclidean(12, 2, &mut rng).unwrap();
        assert_eq!(m.len(), 12);
        assert!((m.rows().iter().flatten().fold(0.0f64, |a, &b| a.max(b)) - 1.0).abs() < 1e-15);
        assert!(m.distance_matrix().is_ok());
    }
}
