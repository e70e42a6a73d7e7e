//! Cardinality-constrained subset selection over feature blocks.
//!
//! Every selector maximizes a metric of `λI + Σ_{i∈S} H_c(i)ᵀ H_c(i)` subject to
//! `|S| = k`. Indices in a [`SelectionResult`] are positions in the problem's
//! block slice. Ties are always broken towards the lowest index.

use std::time::Duration;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use web_time::Instant;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, hadamard_bound, InfoMatrix, MetricKind, MetricScore};
use crate::uncertainty::FeatureBlock;

pub const DEFAULT_PRIOR_LAMBDA: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 0.1;
/// Upper limit on the number of subsets brute force will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Relative slack added to lazy upper bounds so rounding never prunes a
/// candidate that ties the incumbent.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct SelectionProblem<'a> {
    pub blocks: &'a [FeatureBlock],
    pub k: usize,
    pub metric: MetricKind,
    pub epsilon: f64,
    pub prior_lambda: f64,
    pub seed: u64,
}

impl<'a> SelectionProblem<'a> {
    pub fn new(blocks: &'a [FeatureBlock], k: usize) -> Self {
        SelectionProblem {
            blocks,
            k,
            metric: MetricKind::MaxLogDet,
            epsilon: DEFAULT_EPSILON,
            prior_lambda: DEFAULT_PRIOR_LAMBDA,
            seed: 0,
        }
    }

    pub fn with_metric(mut self, metric: MetricKind) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_prior(mut self, prior_lambda: f64) -> Self {
        self.prior_lambda = prior_lambda;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > self.blocks.len() {
            return Err(Error::InvalidInput(format!("k = {} exceeds n = {}", self.k, self.blocks.len())));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.prior_lambda > 0.0) || !self.prior_lambda.is_finite() {
            return Err(Error::InvalidInput(format!("prior lambda {} must be positive", self.prior_lambda)));
        }
        Ok(())
    }

    pub fn prior(&self) -> InfoMatrix {
        InfoMatrix::with_prior(self.prior_lambda)
    }

    /// Accumulator for a set of block positions.
    pub fn accumulate(&self, chosen: &[usize]) -> InfoMatrix {
        InfoMatrix::from_blocks(self.prior_lambda, chosen.iter().map(|&i| &self.blocks[i]))
    }

    /// Metric value of a set of block positions.
    pub fn value_of(&self, chosen: &[usize]) -> f64 {
        evaluate(self.metric, &self.accumulate(chosen))
    }

    /// `logDet(λI + Σ_S) − logDet(λI)`, the normalized set function.
    pub fn normalized_logdet(&self, chosen: &[usize]) -> f64 {
        self.accumulate(chosen).log_det() - self.prior().log_det()
    }

    /// Feature ids of a result's chosen positions, in selection order.
    pub fn feature_ids(&self, result: &SelectionResult) -> Vec<usize> {
        result.chosen.iter().map(|&i| self.blocks[i].feature_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Chosen block positions in selection order.
    pub chosen: Vec<usize>,
    pub metric_value: f64,
    /// Total exact metric evaluations.
    pub gain_evaluations: u64,
    /// Exact evaluations per round (one entry for brute force).
    pub round_evaluations: Vec<u64>,
    pub wall_time: Duration,
}

impl SelectionResult {
    fn finish(problem: &SelectionProblem, chosen: Vec<usize>, round_evaluations: Vec<u64>, start: Instant) -> Self {
        SelectionResult {
            metric_value: problem.value_of(&chosen),
            gain_evaluations: round_evaluations.iter().sum(),
            chosen,
            round_evaluations,
            wall_time: start.elapsed(),
        }
    }

    pub fn chosen_sorted(&self) -> Vec<usize> {
        let mut c = self.chosen.clone();
        c.sort_unstable();
        c
    }
}

/// Lazier-greedy sample size `min(n, ⌈(n/k)·ln(1/ε)⌉)`, at least 1.
pub fn sample_size(n: usize, k: usize, epsilon: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = k.max(1);
    let raw = (n as f64 / k as f64) * (1.0 / epsilon).ln();
    if !raw.is_finite() || raw >= n as f64 {
        return n;
    }
    (raw.ceil() as usize).clamp(1, n)
}

/// Draws `amount` distinct positions in `0..len` uniformly.
pub(crate) fn sample_positions(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, len, amount.min(len)).into_vec()
}

pub(crate) fn selection_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn binomial(n: usize, k: usize, cap: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap {
            return acc;
        }
    }
    acc
}

/// Exhaustive search for the optimal subset. Ties resolve to the
/// lexicographically smallest index set.
pub fn brute_force_select(problem: &SelectionProblem) -> Result<SelectionResult> {
    problem.validate()?;
    let start = Instant::now();
    let (n, k) = (problem.n(), problem.k);
    let subsets = binomial(n, k, BRUTE_FORCE_LIMIT);
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { subsets, limit: BRUTE_FORCE_LIMIT });
    }
    let mut best: Option<(MetricScore, Vec<usize>)> = None;
    let mut evaluations = 0u64;
    for subset in (0..n).combinations(k) {
        evaluations += 1;
        let score = MetricScore::of(problem.metric, &problem.accumulate(&subset));
        if best.as_ref().is_none_or(|(b, _)| score.is_better_than(b)) {
            best = Some((score, subset));
        }
    }
    let chosen = best.map(|(_, s)| s).unwrap_or_default();
    Ok(SelectionResult::finish(problem, chosen, vec![evaluations], start))
}

/// Plain greedy: each round scans every remaining candidate.
pub fn greedy_select(problem: &SelectionProblem) -> Result<SelectionResult> {
    problem.validate()?;
    let start = Instant::now();
    let mut acc = problem.prior();
    let mut remaining: Vec<usize> = (0..problem.n()).collect();
    let mut chosen = Vec::with_capacity(problem.k);
    let mut rounds = Vec::with_capacity(problem.k);
    for _ in 0..problem.k {
        let (pos, _) = best_candidate(problem, &acc, remaining.iter().copied().enumerate());
        rounds.push(remaining.len() as u64);
        let pick = remaining.remove(pos);
        acc.add_block(&problem.blocks[pick]);
        chosen.push(pick);
    }
    Ok(SelectionResult::finish(problem, chosen, rounds, start))
}

/// Scores `(slot, index)` candidates against `acc` and returns the slot of the
/// best one, breaking ties towards the lowest index.
fn best_candidate(
    problem: &SelectionProblem,
    acc: &InfoMatrix,
    candidates: impl Iterator<Item = (usize, usize)>,
) -> (usize, MetricScore) {
    let mut best: Option<(usize, usize, MetricScore)> = None;
    for (slot, idx) in candidates {
        let score = MetricScore::of(problem.metric, &acc.with_block(&problem.blocks[idx]));
        let better = match &best {
            None => true,
            Some((_, bidx, bscore)) => match score.total_cmp(bscore) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => idx < *bidx,
                std::cmp::Ordering::Less => false,
            },
        };
        if better {
            best = Some((slot, idx, score));
        }
    }
    let (slot, _, score) = best.expect("candidate set is non-empty");
    (slot, score)
}

/// Lazy greedy for Max-logDet.
///
/// Each candidate's gain is bounded above by the smaller of its gain from an
/// earlier round (valid by submodularity) and the Hadamard bound on the
/// augmented accumulator. Candidates are evaluated in decreasing bound order
/// until the next bound falls below the best exact value found, so the
/// chosen set is identical to [`greedy_select`].
pub fn lazy_greedy_select(problem: &SelectionProblem) -> Result<SelectionResult> {
    problem.validate()?;
    if problem.metric != MetricKind::MaxLogDet {
        return Err(Error::InvalidInput("lazy greedy requires the Max-logDet metric".into()));
    }
    let start = Instant::now();
    let n = problem.n();
    let mut acc = problem.prior();
    let mut stale_gain = vec![f64::INFINITY; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::with_capacity(problem.k);
    let mut rounds = Vec::with_capacity(problem.k);

    for _ in 0..problem.k {
        let base = acc.log_det();
        let diag = acc.diagonal();
        let mut order: Vec<(f64, usize)> = remaining
            .iter()
            .map(|&i| {
                let hadamard = hadamard_bound(&(diag + problem.blocks[i].information().diagonal())) - base;
                let bound = stale_gain[i].min(hadamard);
                (bound + BOUND_SLACK * (1.0 + bound.abs()), i)
            })
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut evaluations = 0u64;
        let mut best: Option<(f64, usize)> = None;
        for &(bound, i) in &order {
            if let Some((best_value, _)) = best {
                if base + bound < best_value {
                    break;
                }
            }
            let value = acc.with_block(&problem.blocks[i]).log_det();
            evaluations += 1;
            stale_gain[i] = value - base;
            let better = match best {
                None => true,
                Some((bv, bi)) => value > bv || (value == bv && i < bi),
            };
            if better {
                best = Some((value, i));
            }
        }
        let (_, pick) = best.expect("k <= n");
        rounds.push(evaluations);
        remaining.retain(|&i| i != pick);
        acc.add_block(&problem.blocks[pick]);
        chosen.push(pick);
    }
    Ok(SelectionResult::finish(problem, chosen, rounds, start))
}

/// Lazier (stochastic) greedy: each round evaluates only a uniform sample of
/// `sample_size(n, k, ε)` remaining candidates, drawn without replacement.
pub fn lazier_greedy_select(problem: &SelectionProblem) -> Result<SelectionResult> {
    problem.validate()?;
    let start = Instant::now();
    let s = sample_size(problem.n(), problem.k, problem.epsilon);
    let mut rng = selection_rng(problem.seed);
    let mut acc = problem.prior();
    let mut pool: Vec<usize> = (0..problem.n()).collect();
    let mut chosen = Vec::with_capacity(problem.k);
    let mut rounds = Vec::with_capacity(problem.k);
    for _ in 0..problem.k {
        let sample = sample_positions(&mut rng, pool.len(), s);
        rounds.push(sample.len() as u64);
        let (slot, _) = best_candidate(problem, &acc, sample.iter().map(|&p| (p, pool[p])));
        let pick = pool.remove(slot);
        acc.add_block(&problem.blocks[pick]);
        chosen.push(pick);
    }
    Ok(SelectionResult::finish(problem, chosen, rounds, start))
}

/// Uniformly random `k`-subset.
pub fn random_select(problem: &SelectionProblem) -> Result<SelectionResult> {
    problem.validate()?;
    let start = Instant::now();
    let mut rng = selection_rng(problem.seed);
    let chosen = sample_positions(&mut rng, problem.n(), problem.k);
    Ok(SelectionResult::finish(problem, chosen, Vec::new(), start))
}

/// Which selector to run; `All` keeps every block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Selector {
    BruteForce,
    Greedy,
    LazyGreedy,
    LazierGreedy,
    Random,
}

pub fn select(selector: Selector, problem: &SelectionProblem) -> Result<SelectionResult> {
    match selector {
        Selector::BruteForce => brute_force_select(problem),
        Selector::Greedy => greedy_select(problem),
        Selector::LazyGreedy => lazy_greedy_select(problem),
        Selector::LazierGreedy => lazier_greedy_select(problem),
        Selector::Random => random_select(problem),
    }
}

/// Approximation guarantees of lazier greedy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryBounds {
    /// `1 − 1/e − ε`, the ratio reached in expectation.
    pub ratio_expectation: f64,
    /// Minimum probability of reaching that ratio,
    /// `1 − exp(−k/2 · (√μ + ln(ε + e⁻¹)/√μ)²)`, clamped to `[0, 1]`.
    pub probability: f64,
}

pub fn theory_bounds(k: usize, mu: f64, epsilon: f64) -> Result<TheoryBounds> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidInput(format!("mu {mu} outside (0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let inv_e = (-1.0f64).exp();
    let root_mu = mu.sqrt();
    let inner = root_mu + (epsilon + inv_e).ln() / root_mu;
    let probability = 1.0 - (-0.5 * k as f64 * inner * inner).exp();
    Ok(TheoryBounds { ratio_expectation: 1.0 - inv_e - epsilon, probability: probability.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2x6;
    use rand::Rng;

    fn random_blocks(seed: u64, n: usize) -> Vec<FeatureBlock> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| FeatureBlock::mono(i, Matrix2x6::from_fn(|_, _| rng.random_range(-1.0..1.0))))
            .collect()
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(sample_size(1500, 100, 0.1), 35);
        assert_eq!(sample_size(100, 10, 1e-12), 100);
        assert_eq!(sample_size(10, 10, 0.1), 3);
        assert_eq!(sample_size(10, 10, 0.9), 1);
    }

    #[test]
    fn empty_and_full_selections() {
        let blocks = random_blocks(1, 6);
        let p = SelectionProblem::new(&blocks, 0);
        for sel in [Selector::BruteForce, Selector::Greedy, Selector::LazyGreedy, Selector::LazierGreedy, Selector::Random] {
            let r = select(sel, &p).unwrap();
            assert!(r.chosen.is_empty());
            assert_eq!(r.metric_value, p.prior().log_det());
        }
        let p = SelectionProblem::new(&blocks, 6);
        for sel in [Selector::BruteForce, Selector::Greedy, Selector::LazyGreedy, Selector::LazierGreedy, Selector::Random] {
            assert_eq!(select(sel, &p).unwrap().chosen_sorted(), vec![0, 1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        let blocks = random_blocks(2, 4);
        assert!(greedy_select(&SelectionProblem::new(&blocks, 5)).is_err());
        assert!(greedy_select(&SelectionProblem::new(&blocks, 2).with_epsilon(1.0)).is_err());
        assert!(greedy_select(&SelectionProblem::new(&blocks, 2).with_prior(0.0)).is_err());
        let p = SelectionProblem::new(&blocks, 2).with_metric(MetricKind::MaxTrace);
        assert!(lazy_greedy_select(&p).is_err());
    }

    #[test]
    fn brute_force_guard() {
        let blocks = random_blocks(3, 40);
        let err = brute_force_select(&SelectionProblem::new(&blocks, 20)).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }

    #[test]
    fn greedy_trace_is_top_k() {
        let blocks = random_blocks(4, 30);
        let p = SelectionProblem::new(&blocks, 7).with_metric(MetricKind::MaxTrace);
        let r = greedy_select(&p).unwrap();
        let mut by_trace: Vec<usize> = (0..30).collect();
        by_trace.sort_by(|&a, &b| blocks[b].information().trace().total_cmp(&blocks[a].information().trace()));
        let mut top: Vec<usize> = by_trace[..7].to_vec();
        top.sort_unstable();
        assert_eq!(r.chosen_sorted(), top);
    }

    #[test]
    fn identical_blocks_lazy_counts() {
        let one = random_blocks(5, 1).remove(0);
        let blocks: Vec<FeatureBlock> = (0..8).map(|i| FeatureBlock::mono(i, one.left_rows())).collect();
        let p = SelectionProblem::new(&blocks, 4);
        let lazy = lazy_greedy_select(&p).unwrap();
        let greedy = greedy_select(&p).unwrap();
        assert_eq!(lazy.chosen, greedy.chosen);
        assert_eq!(lazy.chosen, vec![0, 1, 2, 3]);
        assert_eq!(lazy.round_evaluations[0], 8);
        assert!(lazy.round_evaluations.iter().all(|&c| c >= 1));
        assert!(lazy.gain_evaluations <= greedy.gain_evaluations);
    }

    #[test]
    fn lazier_with_full_sample_equals_greedy() {
        let blocks = random_blocks(6, 25);
        let p = SelectionProblem::new(&blocks, 6).with_epsilon(1e-30).with_seed(9);
        assert_eq!(sample_size(25, 6, 1e-30), 25);
        assert_eq!(lazier_greedy_select(&p).unwrap().chosen, greedy_select(&p).unwrap().chosen);
    }

    #[test]
    fn lazier_and_random_are_deterministic() {
        let blocks = random_blocks(7, 40);
        let p = SelectionProblem::new(&blocks, 5).with_seed(42);
        assert_eq!(lazier_greedy_select(&p).unwrap().chosen, lazier_greedy_select(&p).unwrap().chosen);
        assert_eq!(random_select(&p).unwrap().chosen, random_select(&p).unwrap().chosen);
        let r = lazier_greedy_select(&p).unwrap();
        assert!(r.gain_evaluations <= (sample_size(40, 5, 0.1) * 5) as u64);
    }

    #[test]
    fn min_cond_selection_runs_on_rank_deficient_accumulators() {
        let blocks = random_blocks(8, 12);
        let p = SelectionProblem::new(&blocks, 4).with_metric(MetricKind::MinCond);
        let g = greedy_select(&p).unwrap();
        let b = brute_force_select(&p).unwrap();
        assert_eq!(g.chosen.len(), 4);
        assert!(b.metric_value <= g.metric_value);
    }

    #[test]
    fn theory_bound_examples() {
        let mu: f64 = 0.8;
        let eps = (-mu).exp() - (-1.0f64).exp();
        assert!((eps - 0.081450).abs() < 1e-6);
        assert!(theory_bounds(450, mu, eps).unwrap().probability < 1e-12);
        let tiny = theory_bounds(450, mu, 1e-12).unwrap();
        assert!((tiny.ratio_expectation - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!(theory_bounds(10, 0.0, 0.1).is_err());
        assert!(theory_bounds(10, 0.5, 0.0).is_err());
    }
}
