//! Small symmetric-group toolkit: permutations of `0..k` in one-line
//! notation, cycle types and signs.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

/// Integer partition of `k`, stored non-increasing. Labels a conjugacy class
/// of `S_k` by its cycle lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CycleType(Vec<usize>);

impl CycleType {
    pub fn new(mut parts: Vec<usize>) -> Self {
        parts.retain(|&p| p > 0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        CycleType(parts)
    }

    pub fn of(perm: &[usize]) -> Self {
        let mut seen = vec![false; perm.len()];
        let mut parts = Vec::new();
        for start in 0..perm.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = perm[i];
                len += 1;
            }
            parts.push(len);
        }
        CycleType::new(parts)
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn n_cycles(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == 1)
    }
}

impl std::fmt::Display for CycleType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({})", self.0.iter().join(","))
    }
}

/// All permutations of `0..k` in lexicographic order; index 0 is the identity.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    (0..k).permutations(k).collect()
}

pub fn n_cycles(perm: &[usize]) -> usize {
    let mut seen = 0u64;
    let mut count = 0;
    for start in 0..perm.len() {
        if seen & (1 << start) != 0 {
            continue;
        }
        count += 1;
        let mut i = start;
        while seen & (1 << i) == 0 {
            seen |= 1 << i;
            i = perm[i];
        }
    }
    count
}

/// `(a ∘ b)(i) = a[b[i]]`.
pub fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&i| a[i]).collect()
}

pub fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Parity of the number of inversions of an arbitrary sequence of distinct
/// keys: `+1` when even, `-1` when odd.
pub fn sequence_sign<T: PartialOrd>(seq: &[T]) -> f64 {
    let mut inversions = 0usize;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                inversions += 1;
            }
        }
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `n! / (n - k)!`, the number of ordered k-tuples of distinct elements.
pub fn falling_factorial(n: usize, k: usize) -> f64 {
    (n - k + 1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_types_of_s3() {
        let counts = permutations(3)
            .iter()
            .map(|p| CycleType::of(p))
            .counts();
        assert_eq!(counts[&CycleType::new(vec![1, 1, 1])], 1);
        assert_eq!(counts[&CycleType::new(vec![2, 1])], 3);
        assert_eq!(counts[&CycleType::new(vec![3])], 2);
    }

    #[test]
    fn sign_matches_cycle_parity() {
        for p in permutations(5) {
            let ct = CycleType::of(&p);
            let parity = if (p.len() - ct.n_cycles()).is_multiple_of(2) { 1.0 } else { -1.0 };
            assert_eq!(sequence_sign(&p), parity);
            assert_eq!(n_cycles(&p), ct.n_cycles());
        }
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        for p in permutations(4) {
            assert_eq!(compose(&p, &inverse(&p)), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn falling_factorials() {
        assert_eq!(falling_factorial(7, 3), 210.0);
        assert_eq!(falling_factorial(4, 0), 1.0);
        assert_eq!(factorial(7), 5040.0);
    }
}
