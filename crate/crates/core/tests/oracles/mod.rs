//! Independent reference solvers for the acceptance suite. They share no
//! code with the library and favour obviously-correct enumeration over
//! speed.

use std::collections::HashMap;

/// Solves `A c = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is negligible.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-11 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// `argmin_{u ∈ cone(gens)} ‖x − u‖²_M` with `M = diag(m)`, by trying every
/// generator subset of size at most `dim` as the support and keeping the
/// best nonnegative solution.
pub fn cone_projection(gens: &[Vec<f64>], x: &[f64], m: &[f64]) -> Vec<f64> {
    let n = x.len();
    let ip = |a: &[f64], b: &[f64]| -> f64 { (0..n).map(|i| a[i] * m[i] * b[i]).sum() };
    let mut best_u = vec![0.0; n];
    let mut best = ip(x, x);
    for mask in 1u32..(1u32 << gens.len()) {
        let s: Vec<usize> = (0..gens.len()).filter(|i| mask >> i & 1 == 1).collect();
        if s.len() > n {
            continue;
        }
        let a: Vec<Vec<f64>> = s.iter().map(|&i| s.iter().map(|&j| ip(&gens[i], &gens[j])).collect()).collect();
        let b: Vec<f64> = s.iter().map(|&i| ip(&gens[i], x)).collect();
        let Some(c) = solve(a, b) else { continue };
        if c.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut u = vec![0.0; n];
        for (ci, &i) in c.iter().zip(&s) {
            for t in 0..n {
                u[t] += ci.max(0.0) * gens[i][t];
            }
        }
        let r: Vec<f64> = (0..n).map(|t| x[t] - u[t]).collect();
        let obj = ip(&r, &r);
        if obj < best {
            best = obj;
            best_u = u;
        }
    }
    best_u
}

/// Optimal transport cost between `supply` and `demand` (equal totals) under
/// `dist`, by successive shortest paths with Bellman–Ford.
pub fn transport_cost(dist: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> f64 {
    let n = supply.len();
    let (s, t) = (2 * n, 2 * n + 1);
    // Edge list with paired reverse edges at index ^ 1.
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut cost = Vec::new();
    let mut add = |a: usize, b: usize, c: f64, w: f64, to: &mut Vec<(usize, usize)>| {
        to.push((a, b));
        cap.push(c);
        cost.push(w);
        to.push((b, a));
        cap.push(0.0);
        cost.push(-w);
    };
    for i in 0..n {
        add(s, i, supply[i], 0.0, &mut to);
        add(n + i, t, demand[i], 0.0, &mut to);
        for j in 0..n {
            add(i, n + j, f64::INFINITY, dist[i][j], &mut to);
        }
    }
    let total: f64 = supply.iter().sum();
    let mut sent = 0.0;
    let mut result = 0.0;
    while total - sent > 1e-13 * total.max(1.0) {
        let mut d = vec![f64::INFINITY; 2 * n + 2];
        let mut via = vec![usize::MAX; 2 * n + 2];
        d[s] = 0.0;
        for _ in 0..2 * n + 2 {
            let mut changed = false;
            for (e, &(a, b)) in to.iter().enumerate() {
                if cap[e] > 1e-15 && d[a] + cost[e] < d[b] - 1e-15 {
                    d[b] = d[a] + cost[e];
                    via[b] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !d[t].is_finite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            let e = via[v];
            push = push.min(cap[e]);
            v = to[e].0;
        }
        let mut v = t;
        while v != s {
            let e = via[v];
            cap[e] -= push;
            cap[e ^ 1] += push;
            v = to[e].0;
        }
        sent += push;
        result += push * d[t];
    }
    result
}

/// Every metric on `n` points with off-diagonal distances in `{1, 2, 3}`.
pub fn small_metrics(n: usize) -> Vec<Vec<Vec<f64>>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    for code in 0..3usize.pow(pairs.len() as u32) {
        let mut d = vec![vec![0.0; n]; n];
        let mut c = code;
        for &(i, j) in &pairs {
            let v = (c % 3 + 1) as f64;
            c /= 3;
            d[i][j] = v;
            d[j][i] = v;
        }
        let ok = (0..n).all(|a| (0..n).all(|b| (0..n).all(|m| d[a][b] <= d[a][m] + d[m][b])));
        if ok {
            out.push(d);
        }
    }
    out
}

fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in multisets(n, k - 1) {
        let lo = rest.last().copied().unwrap_or(0);
        for p in lo..n {
            let mut v = rest.clone();
            v.push(p);
            out.push(v);
        }
    }
    out
}

fn matching(d: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (0..b.len())
        .map(|j| {
            let mut rest = b.to_vec();
            rest.remove(j);
            d[a[0]][b[j]] + matching(d, &a[1..], &rest)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Offline k-server optimum by dynamic programming over server multisets.
pub fn kserver_dp(d: &[Vec<f64>], k: usize, requests: &[usize], rho0: &[usize]) -> f64 {
    let configs = multisets(d.len(), k);
    let mut start = rho0.to_vec();
    start.sort_unstable();
    let mut cur: HashMap<Vec<usize>, f64> = HashMap::from([(start, 0.0)]);
    for &r in requests {
        let mut next = HashMap::new();
        for c2 in configs.iter().filter(|c| c.contains(&r)) {
            let best = cur.iter().map(|(c1, v)| v + matching(d, c1, c2)).fold(f64::INFINITY, f64::min);
            next.insert(c2.clone(), best);
        }
        cur = next;
    }
    cur.values().copied().fold(f64::INFINITY, f64::min)
}
