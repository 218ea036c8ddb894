//! Oracles shared by the integration tests. Written against the definitions,
//! not against the library's closure or recursion code.
#![allow(dead_code)]

use num_rational::Ratio;

const TOL: f64 = 1e-9;

fn contains(set: &[f64], x: f64) -> bool {
    set.iter().any(|y| (x - y).abs() <= TOL)
}

/// Breadth-first closure of `gens` under `x + y` and the derivative shifts of
/// the real families: `x + 1` for power, `x + 1 + k (k >= 1)` for the
/// square-root shift. Everything is cut at `cutoff`.
pub fn bfs_closure(kind: &str, gens: &[f64], cutoff: f64) -> Vec<f64> {
    let lim = cutoff + TOL;
    let mut set: Vec<f64> = Vec::new();
    let mut frontier: Vec<f64> = Vec::new();
    for &g in gens {
        if g <= lim && !contains(&set, g) {
            set.push(g);
            frontier.push(g);
        }
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &x in &frontier {
            let mut cand = Vec::new();
            match kind {
                "power" => cand.push(x + 1.0),
                "sqrt_shift" => {
                    let mut k = 2.0;
                    while x + k <= lim {
                        cand.push(x + k);
                        k += 1.0;
                    }
                }
                other => panic!("no oracle for {other}"),
            }
            let others: Vec<f64> = set.iter().chain(next.iter()).copied().collect();
            for y in others {
                cand.push(x + y);
            }
            for c in cand {
                if c <= lim && !contains(&set, c) && !contains(&next, c) {
                    next.push(c);
                }
            }
        }
        set.extend(next.iter().copied());
        frontier = next;
    }
    set.sort_by(|a, b| a.partial_cmp(b).unwrap());
    set
}

pub fn same_sets(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL)
}

pub type Pair = (Ratio<i64>, Ratio<i64>);

/// `c_{p,n}` read off the series `ψ_p' = -γa Σ_{k>=1} ψ_{(a+1, b+k)}
/// - (1-γ)b Σ_{k>=1} ψ_{(a+k, b+1)}` by scanning shifts `k` up to `max_shift`.
pub fn pair_scan_vee(gamma: f64, p: Pair, n: Pair, max_shift: i64) -> f64 {
    let one = Ratio::from_integer(1);
    let a = *p.0.numer() as f64 / *p.0.denom() as f64;
    let b = *p.1.numer() as f64 / *p.1.denom() as f64;
    let mut c = 0.0;
    for k in 1..=max_shift {
        let k = Ratio::from_integer(k);
        if (p.0 + one, p.1 + k) == n {
            c -= gamma * a;
        }
        if (p.0 + k, p.1 + one) == n {
            c -= (1.0 - gamma) * b;
        }
    }
    c
}
