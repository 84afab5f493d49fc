/// Sparse vector stored as parallel index/value arrays, indices strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    /// Builds from unsorted `(index, value)` pairs, summing duplicates and
    /// dropping exact zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut idx = Vec::with_capacity(pairs.len());
        let mut val: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if idx.last() == Some(&i) {
                *val.last_mut().unwrap() += v;
            } else {
                idx.push(i);
                val.push(v);
            }
        }
        let mut out = Self { idx: Vec::with_capacity(val.len()), val: Vec::with_capacity(val.len()) };
        for (i, v) in idx.into_iter().zip(val) {
            if v != 0.0 {
                out.idx.push(i);
                out.val.push(v);
            }
        }
        out
    }

    pub fn from_dense(d: &[f64]) -> Self {
        let mut out = Self::default();
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                out.idx.push(i);
                out.val.push(v);
            }
        }
        out
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            d[i] = v;
        }
        d
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.idx.last().copied()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// `Σ_i a_i b_i h_i`.
    pub fn weighted_dot(&self, other: &SparseVec, h: &[f64]) -> f64 {
        let (mut p, mut q, mut s) = (0, 0, 0.0);
        while p < self.idx.len() && q < other.idx.len() {
            match self.idx[p].cmp(&other.idx[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let i = self.idx[p];
                    s += self.val[p] * other.val[q] * h[i];
                    p += 1;
                    q += 1;
                }
            }
        }
        s
    }

    /// `dense += s·self`.
    pub fn axpy(&self, s: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i] += s * v;
        }
    }

    pub fn norm2(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Self {
        Self { idx: self.idx.clone(), val: self.val.iter().map(|v| -v).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_merge_and_drop_zeros() {
        let s = SparseVec::from_pairs(vec![(3, 1.0), (1, 2.0), (3, -1.0), (0, 0.5)]);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![(0, 0.5), (1, 2.0)]);
        assert_eq!(s.to_dense(4), vec![0.5, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn weighted_dot_matches_dense() {
        let a = SparseVec::from_dense(&[1.0, 0.0, 2.0, -1.0]);
        let b = SparseVec::from_dense(&[0.0, 3.0, 1.0, 1.0]);
        let h = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(a.weighted_dot(&b, &h), 2.0 * 3.0 - 4.0);
    }
}
