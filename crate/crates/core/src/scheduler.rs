//! Selection of the dual-layer devices: exact minimization of the aggregate
//! pairwise discordance over all size-`K'` subsets, plus random and
//! exhaustive baselines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::DiscordanceMatrix;

/// A scheduling decision: the selected devices and the induced indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    /// Selected device indices, ascending.
    pub selected: Vec<usize>,
    /// `mu[k]` is true iff device `k` is selected.
    pub mu: Vec<bool>,
    /// Packed strict upper triangle of the pair indicators, row by row.
    nu: Vec<bool>,
    /// Sum of discordances over selected pairs (0 when no matrix was given).
    pub objective: f64,
}

fn tri_index(k: usize, j: usize, l: usize) -> usize {
    debug_assert!(j < l && l < k);
    j * (2 * k - j - 1) / 2 + (l - j - 1)
}

impl ScheduleDecision {
    /// Builds a decision from a selection, filling `mu`, `nu` and the objective.
    pub fn from_selection(
        k: usize,
        mut selected: Vec<usize>,
        theta: Option<&DiscordanceMatrix>,
    ) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if selected.iter().any(|&i| i >= k) {
            return Err(Error::invalid("selected index out of range"));
        }
        if let Some(t) = theta {
            if t.k() != k {
                return Err(Error::invalid("discordance matrix size differs from K"));
            }
        }
        let mut mu = vec![false; k];
        for &i in &selected {
            mu[i] = true;
        }
        let mut nu = vec![false; k * k.saturating_sub(1) / 2];
        for j in 0..k {
            for l in (j + 1)..k {
                nu[tri_index(k, j, l)] = mu[j] && mu[l];
            }
        }
        let objective = theta.map_or(0.0, |t| subset_objective(t, &selected));
        Ok(ScheduleDecision {
            selected,
            mu,
            nu,
            objective,
        })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn k_prime(&self) -> usize {
        self.selected.len()
    }

    /// Pair indicator for `j != l` (order-insensitive).
    pub fn nu(&self, j: usize, l: usize) -> bool {
        let (a, b) = if j < l { (j, l) } else { (l, j) };
        a != b && self.nu[tri_index(self.k(), a, b)]
    }
}

/// `sum_{j<l in subset} theta[j][l]`, accumulated in ascending (j, l) order.
/// `subset` must be sorted.
pub fn subset_objective(theta: &DiscordanceMatrix, subset: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (a, &j) in subset.iter().enumerate() {
        for &l in &subset[a + 1..] {
            acc += theta.get(j, l);
        }
    }
    acc
}

fn check_sizes(k: usize, k_prime: usize) -> Result<()> {
    if k_prime == 0 || k_prime > k {
        return Err(Error::invalid(format!(
            "K' must lie in [1, K={k}], got {k_prime}"
        )));
    }
    Ok(())
}

/// Size-`r` subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, r: usize) -> Self {
        Combinations {
            n,
            idx: (0..r).collect(),
            done: r > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let r = self.idx.len();
        let mut i = r;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - r + i {
                self.idx[i] += 1;
                for j in (i + 1)..r {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Binomial coefficient, saturating at `u64::MAX`.
pub fn binomial(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exhaustive minimization over every subset; ties go to the lexicographically
/// smallest subset.
pub fn enumerate_schedule(theta: &DiscordanceMatrix, k_prime: usize) -> Result<ScheduleDecision> {
    let k = theta.k();
    check_sizes(k, k_prime)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in Combinations::new(k, k_prime) {
        let v = subset_objective(theta, &subset);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, subset));
        }
    }
    let (_, sel) = best.expect("at least one subset");
    ScheduleDecision::from_selection(k, sel, Some(theta))
}

struct BranchAndBound<'a> {
    theta: &'a DiscordanceMatrix,
    k: usize,
    k_prime: usize,
    chosen: Vec<usize>,
    best: f64,
    best_set: Vec<usize>,
    scratch: Vec<f64>,
}

impl BranchAndBound<'_> {
    /// Lower bound on the cost still to be added when `r` more devices are
    /// picked from `next..k`: each candidate's cost to the current set plus
    /// half its `r-1` cheapest pairs among the candidates, summed over the
    /// `r` cheapest candidates.
    fn completion_bound(&mut self, next: usize, r: usize) -> f64 {
        let mut incs: Vec<f64> = Vec::with_capacity(self.k - next);
        for c in next..self.k {
            let to_set: f64 = self.chosen.iter().map(|&s| self.theta.get(s, c)).sum();
            let mut among = 0.0;
            if r > 1 {
                self.scratch.clear();
                self.scratch.extend(
                    (next..self.k)
                        .filter(|&d| d != c)
                        .map(|d| self.theta.get(c, d)),
                );
                self.scratch.sort_unstable_by(|a, b| a.total_cmp(b));
                among = 0.5 * self.scratch[..r - 1].iter().sum::<f64>();
            }
            incs.push(to_set + among);
        }
        incs.sort_unstable_by(|a, b| a.total_cmp(b));
        incs[..r].iter().sum()
    }

    fn search(&mut self, next: usize, cost: f64) {
        let r = self.k_prime - self.chosen.len();
        if r == 0 {
            let v = subset_objective(self.theta, &self.chosen);
            if v < self.best {
                self.best = v;
                self.best_set = self.chosen.clone();
            }
            return;
        }
        if self.k - next < r {
            return;
        }
        let bound = cost + self.completion_bound(next, r);
        // the bound is exact up to rounding; only prune what cannot be strictly better
        if bound > self.best + 1e-12 * self.best.abs() {
            return;
        }
        let add: f64 = self.chosen.iter().map(|&s| self.theta.get(s, next)).sum();
        self.chosen.push(next);
        self.search(next + 1, cost + add);
        self.chosen.pop();
        self.search(next + 1, cost);
    }
}

/// Globally optimal schedule by depth-first branch and bound.
///
/// Devices are branched in index order with inclusion first, so leaves are
/// visited in lexicographic order and only strict improvements replace the
/// incumbent. The result therefore matches [`enumerate_schedule`] exactly,
/// including its tie-breaking.
pub fn solve_schedule(theta: &DiscordanceMatrix, k_prime: usize) -> Result<ScheduleDecision> {
    let k = theta.k();
    check_sizes(k, k_prime)?;
    let mut bb = BranchAndBound {
        theta,
        k,
        k_prime,
        chosen: Vec::with_capacity(k_prime),
        best: f64::INFINITY,
        best_set: Vec::new(),
        scratch: Vec::with_capacity(k),
    };
    bb.search(0, 0.0);
    let decision = ScheduleDecision::from_selection(k, bb.best_set, Some(theta))?;
    debug_assert!((0..k)
        .all(|j| ((j + 1)..k).all(|l| decision.nu(j, l) == (decision.mu[j] && decision.mu[l]))));
    Ok(decision)
}

/// Uniformly random size-`k_prime` subset of `0..k`.
pub fn random_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    k_prime: usize,
    theta: Option<&DiscordanceMatrix>,
) -> Result<ScheduleDecision> {
    check_sizes(k, k_prime)?;
    let sel = rand::seq::index::sample(rng, k, k_prime).into_vec();
    ScheduleDecision::from_selection(k, sel, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, k: usize) -> DiscordanceMatrix {
        let mut rows = vec![vec![0.0; k]; k];
        for j in 0..k {
            for l in (j + 1)..k {
                let v: f64 = rng.random();
                rows[j][l] = v;
                rows[l][j] = v;
            }
        }
        DiscordanceMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn full_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_theta(&mut rng, 5);
        let d = solve_schedule(&t, 5).unwrap();
        assert_eq!(d.selected, vec![0, 1, 2, 3, 4]);
        assert_eq!(d.objective, subset_objective(&t, &[0, 1, 2, 3, 4]));
    }

    #[test]
    fn unique_zero_pair() {
        let mut rows = vec![vec![1.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        rows[1][2] = 0.0;
        rows[2][1] = 0.0;
        let t = DiscordanceMatrix::from_rows(rows).unwrap();
        let d = solve_schedule(&t, 2).unwrap();
        assert_eq!(d.selected, vec![1, 2]);
        assert_eq!(d.objective, 0.0);
        assert!(d.nu(1, 2) && d.nu(2, 1));
        assert!(!d.nu(0, 1));
    }

    #[test]
    fn single_slot_picks_first_device() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_theta(&mut rng, 6);
        let d = solve_schedule(&t, 1).unwrap();
        assert_eq!(d.selected, vec![0]);
        assert_eq!(d.objective, 0.0);
    }

    #[test]
    fn bad_sizes_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_theta(&mut rng, 4);
        assert!(solve_schedule(&t, 0).is_err());
        assert!(solve_schedule(&t, 5).is_err());
        assert!(random_schedule(&mut rng, 4, 5, None).is_err());
    }

    #[test]
    fn matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 2..=9 {
            let t = random_theta(&mut rng, k);
            for kp in 1..=k {
                let a = solve_schedule(&t, kp).unwrap();
                let b = enumerate_schedule(&t, kp).unwrap();
                assert_eq!(a.objective, b.objective);
                assert_eq!(a.selected, b.selected);
            }
        }
    }

    #[test]
    fn combinations_in_lexicographic_order() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(6, 3).count() as u64, binomial(6, 3));
        assert_eq!(Combinations::new(3, 4).count(), 0);
    }

    #[test]
    fn random_full_set_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            random_schedule(&mut rng, 4, 4, None).unwrap().selected,
            vec![0, 1, 2, 3]
        );
        let a = random_schedule(&mut ChaCha8Rng::seed_from_u64(6), 10, 4, None).unwrap();
        let b = random_schedule(&mut ChaCha8Rng::seed_from_u64(6), 10, 4, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_selection_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 6];
        let draws = 100_000;
        for _ in 0..draws {
            for i in random_schedule(&mut rng, 6, 3, None).unwrap().selected {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.5).abs() <= 0.01, "frequency {f}");
        }
    }
}
