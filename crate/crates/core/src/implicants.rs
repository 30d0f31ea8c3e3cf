//! Two-level minimization: prime implicants by iterated cube merging, then a
//! minimum cover of the on-set.

use std::collections::{BTreeSet, HashSet};

use fixedbitset::FixedBitSet;

/// Largest number of non-essential primes handed to the exact cover search.
pub const EXACT_COVER_LIMIT: usize = 20;

/// A product term over `n` variables. Positions set in `free` are unbound;
/// elsewhere `value` gives the required bit. `value & free == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    pub value: u64,
    pub free: u64,
}

impl Cube {
    pub fn minterm(value: u64) -> Self {
        Cube { value, free: 0 }
    }

    pub fn new(value: u64, free: u64) -> Self {
        Cube {
            value: value & !free,
            free,
        }
    }

    pub fn covers(&self, minterm: u64) -> bool {
        minterm & !self.free == self.value
    }

    pub fn contains(&self, other: &Cube) -> bool {
        other.free & !self.free == 0 && other.value & !self.free == self.value
    }

    pub fn literal_count(&self, vars: usize) -> usize {
        vars - (self.free & mask(vars)).count_ones() as usize
    }

    /// Every minterm inside the cube.
    pub fn minterms(&self) -> impl Iterator<Item = u64> + '_ {
        // Enumerate submasks of `free`.
        let free = self.free;
        let mut sub = Some(0u64);
        std::iter::from_fn(move || {
            let current = sub?;
            sub = if current == free {
                None
            } else {
                Some((current.wrapping_sub(free)) & free)
            };
            Some(self.value | current)
        })
    }

    /// Bitstring with position 0 first: `1`, `0`, or `-`.
    pub fn pattern(&self, vars: usize) -> String {
        (0..vars)
            .map(|i| {
                if self.free >> i & 1 == 1 {
                    '-'
                } else if self.value >> i & 1 == 1 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }
}

fn mask(vars: usize) -> u64 {
    if vars >= 64 {
        u64::MAX
    } else {
        (1u64 << vars) - 1
    }
}

/// All prime implicants of the function whose on-set is `on` and whose
/// don't-care set is `dc`, sorted.
pub fn prime_implicants(vars: usize, on: &[u64], dc: &[u64]) -> Vec<Cube> {
    let mut current: BTreeSet<Cube> = on.iter().chain(dc).map(|&m| Cube::minterm(m)).collect();
    let mut primes = Vec::new();
    while !current.is_empty() {
        let mut merged: HashSet<Cube> = HashSet::new();
        let mut next = BTreeSet::new();
        for cube in &current {
            for bit in (0..vars).map(|i| 1u64 << i) {
                if cube.free & bit != 0 || cube.value & bit != 0 {
                    continue;
                }
                let partner = Cube {
                    value: cube.value | bit,
                    free: cube.free,
                };
                if current.contains(&partner) {
                    merged.insert(*cube);
                    merged.insert(partner);
                    next.insert(Cube::new(cube.value, cube.free | bit));
                }
            }
        }
        primes.extend(current.iter().filter(|c| !merged.contains(c)));
        current = next;
    }
    primes.sort();
    primes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minimization {
    pub vars: usize,
    /// Every prime implicant of `on ∪ dc`.
    pub primes: Vec<Cube>,
    /// Selected primes, sorted.
    pub cover: Vec<Cube>,
    /// Primes that are the sole cover of some on-minterm.
    pub essential: Vec<Cube>,
    /// False when the greedy fallback chose part of the cover.
    pub exact: bool,
}

/// Prime implicants plus a minimum cover of `on`. The cover is exact when at
/// most [`EXACT_COVER_LIMIT`] primes remain after taking essential ones, and
/// greedy otherwise.
pub fn minimize(vars: usize, on: &[u64], dc: &[u64]) -> Minimization {
    let primes = prime_implicants(vars, on, dc);
    let on: Vec<u64> = on.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let candidates: Vec<Cube> = primes
        .iter()
        .copied()
        .filter(|p| on.iter().any(|&m| p.covers(m)))
        .collect();

    let mut essential = BTreeSet::new();
    for &m in &on {
        let mut covering = candidates.iter().filter(|p| p.covers(m));
        if let (Some(p), None) = (covering.next(), covering.next()) {
            essential.insert(*p);
        }
    }
    let uncovered: Vec<u64> = on
        .iter()
        .copied()
        .filter(|&m| !essential.iter().any(|p| p.covers(m)))
        .collect();
    let rest: Vec<Cube> = candidates
        .iter()
        .copied()
        .filter(|p| !essential.contains(p) && uncovered.iter().any(|&m| p.covers(m)))
        .collect();
    let coverage: Vec<FixedBitSet> = rest
        .iter()
        .map(|p| {
            let mut set = FixedBitSet::with_capacity(uncovered.len());
            for (i, &m) in uncovered.iter().enumerate() {
                if p.covers(m) {
                    set.insert(i);
                }
            }
            set
        })
        .collect();
    let literals: Vec<usize> = rest.iter().map(|p| p.literal_count(vars)).collect();

    let (chosen, exact) = if rest.len() <= EXACT_COVER_LIMIT {
        (exact_cover(uncovered.len(), &coverage, &literals), true)
    } else {
        (greedy_cover(uncovered.len(), &coverage, &literals), false)
    };

    let mut cover: Vec<Cube> = essential.iter().copied().chain(chosen.into_iter().map(|i| rest[i])).collect();
    cover.sort();
    Minimization {
        vars,
        primes,
        cover,
        essential: essential.into_iter().collect(),
        exact,
    }
}

/// Smallest set of rows covering all `universe` columns; ties broken by total
/// literal count, then by first occurrence in combination order.
fn exact_cover(universe: usize, rows: &[FixedBitSet], literals: &[usize]) -> Vec<usize> {
    if universe == 0 {
        return Vec::new();
    }
    for size in 1..=rows.len() {
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let mut union = FixedBitSet::with_capacity(universe);
            for &i in &combo {
                union.union_with(&rows[i]);
            }
            if union.count_ones(..) == universe {
                let cost: usize = combo.iter().map(|&i| literals[i]).sum();
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, combo.clone()));
                }
            }
            if !next_combination(&mut combo, rows.len()) {
                break;
            }
        }
        if let Some((_, combo)) = best {
            return combo;
        }
    }
    unreachable!("the full candidate set covers every on-minterm")
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn greedy_cover(universe: usize, rows: &[FixedBitSet], literals: &[usize]) -> Vec<usize> {
    let mut covered = FixedBitSet::with_capacity(universe);
    let mut chosen = Vec::new();
    while covered.count_ones(..) < universe {
        let gain = |i: usize| rows[i].difference(&covered).count();
        let best = (0..rows.len())
            .filter(|&i| gain(i) > 0)
            .max_by(|&a, &b| {
                gain(a)
                    .cmp(&gain(b))
                    .then(literals[b].cmp(&literals[a]))
                    .then(b.cmp(&a))
            })
            .expect("candidate rows cover the universe");
        covered.union_with(&rows[best]);
        chosen.push(best);
    }
    chosen
}
