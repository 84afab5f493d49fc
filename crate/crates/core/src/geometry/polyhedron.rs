use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::cone::GeneratedCone;
use super::metric::LocalMetric;
use super::region::{Generator, Region};
use super::sparse::SparseVec;
use crate::error::{invalid, Error, Result};

/// `{x : a_i·x ≤ b_i}` with some rows flagged as equalities.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    n: usize,
    rows: Vec<SparseVec>,
    rhs: Vec<f64>,
    equality: Vec<bool>,
    keys: Vec<u64>,
    neg_keys: Vec<u64>,
}

/// Accumulates rows before the feasibility check in [`PolyhedronBuilder::build`].
#[derive(Debug, Clone)]
pub struct PolyhedronBuilder {
    n: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    equality: Vec<bool>,
}

impl PolyhedronBuilder {
    pub fn le(mut self, row: Vec<f64>, b: f64) -> Self {
        self.rows.push(row);
        self.rhs.push(b);
        self.equality.push(false);
        self
    }

    pub fn ge(self, row: Vec<f64>, b: f64) -> Self {
        self.le(row.into_iter().map(|v| -v).collect(), -b)
    }

    pub fn eq(mut self, row: Vec<f64>, b: f64) -> Self {
        self.rows.push(row);
        self.rhs.push(b);
        self.equality.push(true);
        self
    }

    /// `lo ≤ x_i ≤ hi` for every coordinate.
    pub fn boxed(mut self, lo: f64, hi: f64) -> Self {
        for i in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[i] = 1.0;
            self = self.le(e.clone(), hi).ge(e, lo);
        }
        self
    }

    pub fn build(self) -> Result<Polyhedron> {
        Polyhedron::new(self.n, self.rows, self.rhs, self.equality)
    }
}

impl Polyhedron {
    pub fn builder(n: usize) -> PolyhedronBuilder {
        PolyhedronBuilder { n, rows: Vec::new(), rhs: Vec::new(), equality: Vec::new() }
    }

    /// Validates shapes, rejects zero rows and checks nonemptiness with a
    /// feasibility solve (Euclidean projection of the origin).
    pub fn new(n: usize, rows: Vec<Vec<f64>>, rhs: Vec<f64>, equality: Vec<bool>) -> Result<Self> {
        if rows.len() != rhs.len() || rows.len() != equality.len() {
            return invalid("row, rhs and equality-mask lengths differ");
        }
        let mut sparse = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return invalid(format!("row {i} has length {} (expected {n})", r.len()));
            }
            if r.iter().any(|v| !v.is_finite()) || !rhs[i].is_finite() {
                return invalid(format!("row {i} has a non-finite entry"));
            }
            let s = SparseVec::from_dense(r);
            if s.is_empty() {
                return invalid(format!("row {i} is identically zero"));
            }
            sparse.push(s);
        }
        let keys = sparse.iter().map(direction_key).collect();
        let neg_keys = sparse.iter().map(|s| direction_key(&s.negated())).collect();
        let p = Self { n, rows: sparse, rhs, equality, keys, neg_keys };
        let mut origin = vec![0.0; n];
        let residual = p.project_in_place(&mut origin, &LocalMetric::identity(n), 200_000);
        let scale = 1.0 + p.rhs.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if residual > 1e-7 * scale {
            return Err(Error::EmptyRegion { residual });
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> (&SparseVec, f64, bool) {
        (&self.rows[i], self.rhs[i], self.equality[i])
    }

    /// Signed violation of row `i` (positive means violated).
    pub fn row_violation(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.rows[i].dot(x) - self.rhs[i];
        if self.equality[i] {
            r.abs()
        } else {
            r
        }
    }

    /// Normal cone generators at `x`: rows with slack at most `tol`, and both
    /// signs of every equality row.
    pub fn active_normal_generators(&self, x: &[f64], tol: f64) -> Result<GeneratedCone> {
        let (worst, row) = self.violation(x);
        if worst > tol {
            return Err(Error::Infeasible { row, violation: worst });
        }
        let gens = self.tight_generators(x, tol);
        GeneratedCone::new(gens.into_iter().map(|g| g.normal.to_dense(self.n)).collect())
    }

    /// Hildreth's dual coordinate ascent for
    /// `argmin {½(z−x)ᵀH⁻¹(z−x) : z ∈ P}`; returns the final violation.
    fn project_in_place(&self, x: &mut [f64], metric: &LocalMetric, max_sweeps: usize) -> f64 {
        let h = metric.diag();
        let m = self.rows.len();
        let mut mult = vec![0.0; m];
        let denom: Vec<f64> = self.rows.iter().map(|r| r.weighted_dot(r, h)).collect();
        for _ in 0..max_sweeps {
            let mut moved: f64 = 0.0;
            for i in 0..m {
                let r = self.rows[i].dot(x) - self.rhs[i];
                let mut new = mult[i] + r / denom[i];
                if !self.equality[i] {
                    new = new.max(0.0);
                }
                let d = new - mult[i];
                if d != 0.0 {
                    for (j, a) in self.rows[i].iter() {
                        x[j] -= d * a * h[j];
                    }
                    mult[i] = new;
                    moved = moved.max((d * d * denom[i]).sqrt());
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        self.violation(x).0.max(0.0)
    }
}

fn direction_key(s: &SparseVec) -> u64 {
    let norm = s.norm2();
    let mut hasher = DefaultHasher::new();
    for (i, v) in s.iter() {
        i.hash(&mut hasher);
        ((v / norm) * 1e9).round().to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

impl Region for Polyhedron {
    fn dim(&self) -> usize {
        self.n
    }

    fn violation(&self, x: &[f64]) -> (f64, usize) {
        let mut worst = f64::NEG_INFINITY;
        let mut row = 0;
        for i in 0..self.rows.len() {
            let r = self.row_violation(i, x);
            if r > worst {
                worst = r;
                row = i;
            }
        }
        (if self.rows.is_empty() { 0.0 } else { worst }, row)
    }

    fn tight_generators(&self, x: &[f64], tol: f64) -> Vec<Generator> {
        let mut out = Vec::new();
        for i in 0..self.rows.len() {
            let slack = self.rhs[i] - self.rows[i].dot(x);
            if self.equality[i] {
                out.push(Generator { key: self.keys[i], normal: self.rows[i].clone() });
                out.push(Generator { key: self.neg_keys[i], normal: self.rows[i].negated() });
            } else if slack <= tol {
                out.push(Generator { key: self.keys[i], normal: self.rows[i].clone() });
            }
        }
        out
    }

    fn max_step(&self, x: &[f64], v: &[f64], h_max: f64, tol: f64) -> f64 {
        let mut h = h_max;
        for i in 0..self.rows.len() {
            if self.equality[i] {
                continue;
            }
            let slack = self.rhs[i] - self.rows[i].dot(x);
            if slack <= tol {
                continue;
            }
            let rate = self.rows[i].dot(v);
            if rate > 0.0 {
                h = h.min(slack / rate);
            }
        }
        h
    }

    fn repair(&self, x: &mut [f64], metric: &LocalMetric) -> f64 {
        self.project_in_place(x, metric, 10_000)
    }
}
