//! Closure of a generator set under the wedge and vee operations of a decay
//! system, truncated at a cutoff `Λ`.
//!
//! Entries are sorted increasingly and carry provenance: which ordered wedge
//! pairs and which vee terms land on them. The coefficient recursion reads the
//! provenance instead of rescanning the lattice for every index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decay::{format_rational, DecayError, DecaySystem, Exponent, Rational, EXPONENT_TOL};

/// Hard limit on the number of lattice entries.
pub const MAX_ENTRIES: usize = 1_000_000;

/// Limit on pair combinations tried during closure.
pub const MAX_PAIR_WORK: u64 = 2_000_000_000;

/// Whether the distinct sums of generator values below `lim` number more than
/// `limit`; every such sum is a lattice value, so this bounds the size early.
fn distinct_sums_exceed(generators: &[Exponent], lim: f64, limit: usize) -> bool {
    let key = |v: f64| (v * 1e9).round() as i64;
    let mut seen = std::collections::HashSet::new();
    let mut frontier: Vec<f64> = Vec::new();
    for g in generators {
        if g.value <= lim && seen.insert(key(g.value)) {
            frontier.push(g.value);
        }
    }
    while let Some(v) = frontier.pop() {
        for g in generators {
            let w = v + g.value;
            if w <= lim && seen.insert(key(w)) {
                if seen.len() > limit {
                    return true;
                }
                frontier.push(w);
            }
        }
    }
    false
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error(transparent)]
    Decay(#[from] DecayError),
    #[error("closure exceeded {MAX_ENTRIES} entries below the cutoff")]
    TooLarge,
    #[error("invalid generator {0}: {1}")]
    BadGenerator(String, String),
    #[error("invalid cutoff {0}")]
    BadCutoff(f64),
    #[error("exponent {0} is not in the lattice")]
    Missing(String),
}

/// How an entry arises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    /// A member of the generating set.
    Generator,
    /// `λ_k ∧ λ_m` for the ordered pair `(k, m)`, with constant `d`.
    Wedge { k: usize, m: usize, d: f64 },
    /// A term `coeff · ψ_{λ_n}` in the derivative rule of `ψ_{λ_p}`.
    Vee { p: usize, coeff: f64 },
}

#[derive(Debug, Clone)]
pub struct LatticeEntry {
    pub exponent: Exponent,
    pub origins: Vec<Origin>,
}

/// A closed, sorted exponent lattice.
#[derive(Debug, Clone)]
pub struct ExponentLattice {
    system: DecaySystem,
    cutoff: f64,
    generators: Vec<Exponent>,
    entries: Vec<LatticeEntry>,
    lookup: Lookup,
}

/// Exponent-to-index map: exact on pairs, bucketed on values.
#[derive(Debug, Clone, Default)]
struct Lookup {
    pairs: HashMap<(Rational, Rational), usize>,
    buckets: HashMap<i64, Vec<usize>>,
}

impl Lookup {
    fn bucket(v: f64) -> i64 {
        (v / EXPONENT_TOL).floor() as i64
    }

    fn find(&self, e: &Exponent, list: &[Exponent]) -> Option<usize> {
        if let Some(p) = e.pair {
            return self.pairs.get(&p).copied();
        }
        let b = Self::bucket(e.value);
        for bb in [b - 1, b, b + 1] {
            if let Some(v) = self.buckets.get(&bb) {
                for &i in v {
                    if list[i].same(e) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, e: &Exponent, i: usize) {
        match e.pair {
            Some(p) => {
                self.pairs.insert(p, i);
            }
            None => self.buckets.entry(Self::bucket(e.value)).or_default().push(i),
        }
    }
}

fn validate_generator(sys: &DecaySystem, g: &Exponent) -> Result<(), LatticeError> {
    let bad = |why: &str| Err(LatticeError::BadGenerator(g.to_string(), why.to_string()));
    if !(g.value.is_finite() && g.value > 0.0) {
        return bad("exponents must be positive and finite");
    }
    if sys.is_discrete() {
        match g.pair {
            None => return bad("product systems need (a, b) pairs"),
            Some((a, b)) => {
                if a < Rational::from_integer(0) || b < Rational::from_integer(0) {
                    return bad("pair components must be nonnegative");
                }
            }
        }
    } else if g.pair.is_some() {
        return bad("pairs are only meaningful for product systems");
    }
    Ok(())
}

impl ExponentLattice {
    /// Smallest set containing the generators below `cutoff` and closed under
    /// wedge and vee, both truncated at `cutoff`.
    pub fn generate(
        system: &DecaySystem,
        generators: &[Exponent],
        cutoff: f64,
    ) -> Result<Self, LatticeError> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(LatticeError::BadCutoff(cutoff));
        }
        let lim = cutoff + EXPONENT_TOL;
        for g in generators {
            validate_generator(system, g)?;
        }
        if distinct_sums_exceed(generators, lim, MAX_ENTRIES) {
            return Err(LatticeError::TooLarge);
        }
        let mut work: u64 = 0;
        let mut list: Vec<Exponent> = Vec::new();
        let mut lookup = Lookup::default();
        let mut queue: Vec<usize> = Vec::new();
        let push = |e: Exponent, list: &mut Vec<Exponent>, lookup: &mut Lookup, queue: &mut Vec<usize>| {
            if e.value > lim || lookup.find(&e, list).is_some() {
                return Ok(());
            }
            if list.len() >= MAX_ENTRIES {
                return Err(LatticeError::TooLarge);
            }
            let i = list.len();
            lookup.insert(&e, i);
            list.push(e);
            queue.push(i);
            Ok(())
        };
        for g in generators {
            push(*g, &mut list, &mut lookup, &mut queue)?;
        }
        // Worklist closure: every entry is combined once with every entry
        // processed before it (and itself), and expanded once under vee.
        let mut processed: Vec<usize> = Vec::new();
        let mut head = 0;
        while head < queue.len() {
            let x = queue[head];
            head += 1;
            let ex = list[x];
            for (e, _) in system.vee(&ex, cutoff)? {
                push(e, &mut list, &mut lookup, &mut queue)?;
            }
            processed.push(x);
            work += processed.len() as u64;
            if work > MAX_PAIR_WORK {
                return Err(LatticeError::TooLarge);
            }
            for &y in &processed {
                if ex.value + list[y].value > lim {
                    continue;
                }
                let (w, _) = system.wedge(&ex, &list[y])?;
                push(w, &mut list, &mut lookup, &mut queue)?;
            }
        }
        list.sort_by(|a, b| a.cmp_key(b));
        let mut lookup = Lookup::default();
        for (i, e) in list.iter().enumerate() {
            lookup.insert(e, i);
        }
        let mut entries: Vec<LatticeEntry> =
            list.iter().map(|&e| LatticeEntry { exponent: e, origins: Vec::new() }).collect();
        for g in generators {
            if let Some(i) = lookup.find(g, &list) {
                if !entries[i].origins.contains(&Origin::Generator) {
                    entries[i].origins.push(Origin::Generator);
                }
            }
        }
        for p in 0..list.len() {
            for (e, c) in system.vee(&list[p], cutoff)? {
                let n = lookup.find(&e, &list).expect("closure contains vee terms");
                entries[n].origins.push(Origin::Vee { p, coeff: c });
            }
        }
        for k in 0..list.len() {
            for m in 0..list.len() {
                if list[k].value + list[m].value > lim {
                    break;
                }
                let (w, d) = system.wedge(&list[k], &list[m])?;
                if let Some(n) = lookup.find(&w, &list) {
                    entries[n].origins.push(Origin::Wedge { k, m, d });
                }
            }
        }
        Ok(ExponentLattice {
            system: system.clone(),
            cutoff,
            generators: generators.to_vec(),
            entries,
            lookup,
        })
    }

    pub fn system(&self) -> &DecaySystem {
        &self.system
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn generators(&self) -> &[Exponent] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LatticeEntry] {
        &self.entries
    }

    /// `λ_n` (zero-based).
    pub fn exponent(&self, n: usize) -> &Exponent {
        &self.entries[n].exponent
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.exponent.value).collect()
    }

    /// Index of `e`, using exact pair equality or the `1e-9` value tolerance.
    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        let list: Vec<Exponent> = Vec::new();
        if e.pair.is_some() {
            return self.lookup.find(e, &list);
        }
        let b = Lookup::bucket(e.value);
        for bb in [b - 1, b, b + 1] {
            if let Some(v) = self.lookup.buckets.get(&bb) {
                for &i in v {
                    if self.entries[i].exponent.same(e) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    /// Ordered wedge pairs `(k, m, d)` with `λ_k ∧ λ_m = λ_n`, from provenance.
    pub fn wedge_pairs(&self, n: usize) -> Vec<(usize, usize, f64)> {
        self.entries[n]
            .origins
            .iter()
            .filter_map(|o| match o {
                Origin::Wedge { k, m, d } => Some((*k, *m, *d)),
                _ => None,
            })
            .collect()
    }

    /// Same as [`ExponentLattice::wedge_pairs`], by rescanning all pairs.
    pub fn wedge_pairs_by_scan(&self, n: usize) -> Result<Vec<(usize, usize, f64)>, LatticeError> {
        let target = self.entries[n].exponent;
        let mut out = Vec::new();
        for k in 0..self.len() {
            for m in 0..self.len() {
                let (w, d) = self.system.wedge(self.exponent(k), self.exponent(m))?;
                if w.same(&target) {
                    out.push((k, m, d));
                }
            }
        }
        Ok(out)
    }

    /// Vee terms `(p, c)` with `c ψ_{λ_n}` in the derivative rule of `ψ_{λ_p}`.
    pub fn vee_terms(&self, n: usize) -> Vec<(usize, f64)> {
        self.entries[n]
            .origins
            .iter()
            .filter_map(|o| match o {
                Origin::Vee { p, coeff } => Some((*p, *coeff)),
                _ => None,
            })
            .collect()
    }

    /// The closure invariant: wedge and vee images below the cutoff stay inside.
    pub fn check_closed(&self) -> Result<bool, LatticeError> {
        let lim = self.cutoff + EXPONENT_TOL;
        for a in &self.entries {
            for (e, _) in self.system.vee(&a.exponent, self.cutoff)? {
                if self.index_of(&e).is_none() {
                    return Ok(false);
                }
            }
            for b in &self.entries {
                let (w, _) = self.system.wedge(&a.exponent, &b.exponent)?;
                if w.value <= lim && self.index_of(&w).is_none() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Wire form: `[{n, value, pair?, origins}]` with one-based `n`.
    pub fn to_dump(&self) -> Vec<LatticeDumpEntry> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| LatticeDumpEntry {
                n: i + 1,
                value: e.exponent.value,
                pair: e.exponent.pair.map(|(a, b)| [format_rational(a), format_rational(b)]),
                origins: e
                    .origins
                    .iter()
                    .map(|o| match o {
                        Origin::Generator => Origin::Generator,
                        Origin::Wedge { k, m, d } => Origin::Wedge { k: k + 1, m: m + 1, d: *d },
                        Origin::Vee { p, coeff } => Origin::Vee { p: p + 1, coeff: *coeff },
                    })
                    .collect(),
            })
            .collect()
    }
}

/// One row of the lattice dump. Indices are one-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDumpEntry {
    pub n: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<[String; 2]>,
    pub origins: Vec<Origin>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(l: &ExponentLattice) -> Vec<f64> {
        l.values()
    }

    #[test]
    fn power_single_generator() {
        let l = ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(0.4)], 2.2).unwrap();
        let want = [0.4, 0.8, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2];
        let got = values(&l);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn sqrt_shift_skips_unit_shift() {
        let l = ExponentLattice::generate(&DecaySystem::sqrt_shift(), &[Exponent::real(1.0)], 4.0)
            .unwrap();
        assert_eq!(values(&l), vec![1.0, 2.0, 3.0, 4.0]);
        let l = ExponentLattice::generate(&DecaySystem::sqrt_shift(), &[Exponent::real(0.7)], 2.5)
            .unwrap();
        // 0.7 + 1 is unreachable; 0.7 + 2 exceeds the cutoff.
        let got = values(&l);
        assert!(got.iter().all(|v| (v - 1.7).abs() > 1e-9));
    }

    #[test]
    fn provenance_matches_rescan() {
        let l = ExponentLattice::generate(
            &DecaySystem::power(),
            &[Exponent::real(0.5), Exponent::real(0.75)],
            3.0,
        )
        .unwrap();
        for n in 0..l.len() {
            let mut a = l.wedge_pairs(n);
            let mut b = l.wedge_pairs_by_scan(n).unwrap();
            a.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            b.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            assert_eq!(a, b);
        }
        assert!(l.check_closed().unwrap());
    }

    #[test]
    fn rejects_nonpositive_generators() {
        assert!(ExponentLattice::generate(&DecaySystem::power(), &[Exponent::real(0.0)], 2.0).is_err());
    }

    #[test]
    fn guard_trips_on_dense_lattices() {
        let r = ExponentLattice::generate(
            &DecaySystem::power(),
            &[Exponent::real(1e-3), Exponent::real(std::f64::consts::PI * 1e-3)],
            20.0,
        );
        assert!(matches!(r, Err(LatticeError::TooLarge)));
    }
}
