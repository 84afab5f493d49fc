use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// How requests are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Uniform,
    /// Point `i` drawn with probability proportional to `(i+1)^{−s}`.
    Zipf { exponent: f64 },
    /// Adaptive: always requests the point the algorithm covers least. For
    /// paging that is the page with the largest antipage mass.
    Adversarial,
    /// `k, 0, 1, …, k−1, k, 0, …` over the first `k + 1` points.
    Cycle,
    Trace(PathBuf),
}

impl GeneratorSpec {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Self::Adversarial)
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    /// `uniform`, `zipf` or `zipf:<s>`, `adversarial`, `cycle`, or
    /// `trace:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("uniform", None) => Ok(Self::Uniform),
            ("zipf", None) => Ok(Self::Zipf { exponent: 1.0 }),
            ("zipf", Some(a)) => {
                let exponent = a.parse().map_err(|_| Error::Parse(format!("bad zipf exponent `{a}`")))?;
                Ok(Self::Zipf { exponent })
            }
            ("adversarial", None) => Ok(Self::Adversarial),
            ("cycle", None) => Ok(Self::Cycle),
            ("trace", Some(p)) if !p.is_empty() => Ok(Self::Trace(PathBuf::from(p))),
            _ => Err(Error::Parse(format!("unknown request generator `{s}`"))),
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Zipf { exponent } => write!(f, "zipf:{exponent}"),
            Self::Adversarial => f.write_str("adversarial"),
            Self::Cycle => f.write_str("cycle"),
            Self::Trace(p) => write!(f, "trace:{}", p.display()),
        }
    }
}

/// A request sequence together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestSequence {
    pub ids: Vec<usize>,
    pub provenance: String,
}

impl RequestSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fails unless every id is below `n`.
    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.ids.iter().position(|&r| r >= n) {
            Some(t) => invalid(format!("request {t} ({}) is not among the {n} points", self.ids[t])),
            None => Ok(()),
        }
    }
}

/// The seeded stream used for a given experiment seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Non-adaptive requests over points `0..n`. Adaptive specs are served by
/// the experiment runner, which can see the algorithm's state.
pub fn generate_requests(spec: &GeneratorSpec, n: usize, k: usize, count: usize, seed: u64) -> Result<RequestSequence> {
    if n == 0 {
        return invalid("cannot generate requests over an empty instance");
    }
    let mut rng = seeded_rng(seed);
    let ids: Vec<usize> = match spec {
        GeneratorSpec::Uniform => (0..count).map(|_| rng.gen_range(0..n)).collect(),
        GeneratorSpec::Zipf { exponent } => {
            if !(exponent.is_finite() && *exponent >= 0.0) {
                return invalid("zipf exponent must be finite and nonnegative");
            }
            let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-exponent)).collect();
            let dist = WeightedIndex::new(&w).map_err(|e| Error::Invalid(e.to_string()))?;
            (0..count).map(|_| dist.sample(&mut rng)).collect()
        }
        GeneratorSpec::Cycle => {
            if n < k + 1 {
                return invalid(format!("a (k+1)-cycle needs {} points, the instance has {n}", k + 1));
            }
            (0..count).map(|t| (k + t) % (k + 1)).collect()
        }
        GeneratorSpec::Adversarial => return invalid("the adversarial generator needs the algorithm's state"),
        GeneratorSpec::Trace(p) => {
            let seq = read_trace(p)?;
            seq.check_range(n)?;
            let ids = if count == 0 { seq.ids } else { seq.ids.into_iter().take(count).collect() };
            return Ok(RequestSequence { ids, provenance: spec.to_string() });
        }
    };
    Ok(RequestSequence { ids, provenance: format!("{spec} seed={seed}") })
}

/// The page with the largest antipage mass `x_i`; ties go to the smallest
/// index.
pub fn adversarial_page(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// The leaf index holding the least server mass; ties go to the smallest
/// index.
pub fn adversarial_leaf(leaf_mass: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in leaf_mass.iter().enumerate() {
        if v < leaf_mass[best] {
            best = i;
        }
    }
    best
}

/// One id per line; blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<usize>().map_err(|_| Error::Parse(format!("bad request id `{l}`"))))
        .collect()
}

pub fn read_trace(path: &Path) -> Result<RequestSequence> {
    let ids = parse_trace(&std::fs::read_to_string(path)?)?;
    Ok(RequestSequence { ids, provenance: format!("trace:{}", path.display()) })
}

/// Writes the provenance as a comment followed by one id per line.
pub fn write_trace(seq: &RequestSequence, path: &Path) -> Result<()> {
    let mut s = format!("# {}\n", seq.provenance);
    for r in &seq.ids {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generators_are_reproducible() {
        let a = generate_requests(&GeneratorSpec::Uniform, 4, 2, 50, 9).unwrap();
        let b = generate_requests(&GeneratorSpec::Uniform, 4, 2, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.ids.iter().all(|&r| r < 4));
        let c = generate_requests(&GeneratorSpec::Uniform, 4, 2, 50, 10).unwrap();
        assert_ne!(a.ids, c.ids);
    }

    #[test]
    fn zipf_prefers_small_ids() {
        let s = generate_requests(&GeneratorSpec::Zipf { exponent: 1.5 }, 10, 2, 2000, 1).unwrap();
        let first = s.ids.iter().filter(|&&r| r == 0).count();
        let last = s.ids.iter().filter(|&&r| r == 9).count();
        assert!(first > 10 * last.max(1), "{first} vs {last}");
    }

    #[test]
    fn cycle_walks_k_plus_one_points() {
        let s = generate_requests(&GeneratorSpec::Cycle, 5, 2, 7, 0).unwrap();
        assert_eq!(s.ids, vec![2, 0, 1, 2, 0, 1, 2]);
        assert!(generate_requests(&GeneratorSpec::Cycle, 2, 2, 7, 0).is_err());
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["uniform", "zipf:1.5", "adversarial", "cycle", "trace:a/b.txt"] {
            assert_eq!(s.parse::<GeneratorSpec>().unwrap().to_string(), s);
        }
        assert!("zipf:x".parse::<GeneratorSpec>().is_err());
        assert!("trace:".parse::<GeneratorSpec>().is_err());
    }

    #[test]
    fn adversaries_pick_the_least_covered_point() {
        assert_eq!(adversarial_page(&[0.1, 0.9, 0.9, 0.2]), 1);
        assert_eq!(adversarial_leaf(&[1.0, 0.0, 0.5, 0.0]), 1);
    }

    #[test]
    fn trace_parsing_skips_comments() {
        assert_eq!(parse_trace("# hi\n3\n\n1 # x\n").unwrap(), vec![3, 1]);
        assert!(parse_trace("a\n").is_err());
    }
}
