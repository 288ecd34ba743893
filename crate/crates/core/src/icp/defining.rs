//! Defining sets: inclusion-minimal sets that intersect every accepted set.

/// Visits every `k`-element subset of `{0..n}` as a bitmask, in increasing
/// numeric order. Requires `n < 64`.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(u64)) {
    debug_assert!(n < 64);
    if k > n {
        return;
    }
    if k == 0 {
        f(0);
        return;
    }
    let limit = 1u64 << n;
    let mut c = (1u64 << k) - 1;
    while c < limit {
        f(c);
        // Gosper's hack: next larger integer with the same popcount.
        let u = c & c.wrapping_neg();
        let v = c + u;
        c = v + (((v ^ c) / u) >> 2);
    }
}

pub(crate) fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &i| m | (1u64 << i))
}

pub(crate) fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefiningSets {
    /// Sorted by cardinality, then lexicographically.
    pub sets: Vec<Vec<usize>>,
    /// Set when the accepted family was empty and `{∅}` is returned by convention.
    pub empty_family: bool,
}

/// All inclusion-minimal hitting sets of `family`, by breadth-first search
/// over cardinality. Elements must be below 64. A family containing the
/// empty set has no hitting set.
pub fn defining_sets(family: &[Vec<usize>]) -> DefiningSets {
    if family.is_empty() {
        return DefiningSets {
            sets: vec![Vec::new()],
            empty_family: true,
        };
    }
    let masks: Vec<u64> = family.iter().map(|s| mask_of(s)).collect();
    if masks.contains(&0) {
        return DefiningSets {
            sets: Vec::new(),
            empty_family: false,
        };
    }
    let universe = members(masks.iter().fold(0, |a, &m| a | m));
    let u = universe.len();
    let mut found: Vec<u64> = Vec::new();
    for k in 1..=u {
        let mut level = Vec::new();
        for_each_combination(u, k, |local| {
            let cand = members(local).iter().fold(0u64, |m, &i| m | (1u64 << universe[i]));
            if found.iter().any(|&f| f & cand == f) {
                return;
            }
            if masks.iter().all(|&s| s & cand != 0) {
                level.push(cand);
            }
        });
        level.sort_by_key(|&m| members(m));
        found.extend(level);
    }
    DefiningSets {
        sets: found.into_iter().map(members).collect(),
        empty_family: false,
    }
}
