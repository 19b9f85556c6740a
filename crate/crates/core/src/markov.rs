//! Markov-chain model of the midpoint-source control protocol.
//!
//! The full chain tracks how many cycles each receiver stays closed. Its
//! states are `(0,0)` (both open), `(i,0)` and `(0,i)` (one side closed for
//! `i` more cycles) and `(i,i)` (both closed, reopening together), for
//! `i = 1..=n`: `3n + 1` states in all. Per clock cycle an open receiver
//! succeeds with probability `p = √β2`.
//!
//! Every state in row `i ≥ 1` moves to row `i − 1` with certainty, so the
//! rows are lumpable and the chain collapses onto the `n + 1` state
//! [`SimplifiedChainModel`]. Its stationary distribution is known in closed
//! form ([`pi0_closed_form`]), which gives an exact oracle for the numeric
//! solvers here.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{check_positive, check_probability, Error, Result};

/// Largest chain solved by dense LU; bigger chains use power iteration.
pub const DENSE_STATE_LIMIT: usize = 3001;

/// Label of a state of the full chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChainState {
    /// `(0,0)`
    Open,
    /// `(i,0)`
    LeftClosed(usize),
    /// `(0,i)`
    RightClosed(usize),
    /// `(i,i)`
    BothClosed(usize),
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ChainState::Open => write!(f, "(0,0)"),
            ChainState::LeftClosed(i) => write!(f, "({i},0)"),
            ChainState::RightClosed(i) => write!(f, "(0,{i})"),
            ChainState::BothClosed(i) => write!(f, "({i},{i})"),
        }
    }
}

/// Row-stochastic matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    fn new(size: usize) -> Self {
        Self {
            rows: vec![Vec::new(); size],
        }
    }

    fn add(&mut self, from: usize, to: usize, prob: f64) {
        if prob > 0.0 {
            self.rows[from].push((to, prob));
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, from: usize) -> &[(usize, f64)] {
        &self.rows[from]
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One step of the distribution: `πᵀT`.
    pub fn propagate(&self, dist: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.len()];
        for (from, row) in self.rows.iter().enumerate() {
            let mass = dist[from];
            if mass == 0.0 {
                continue;
            }
            for &(to, p) in row {
                next[to] += mass * p;
            }
        }
        next
    }

    /// `‖πᵀT − πᵀ‖∞`.
    pub fn residual(&self, dist: &[f64]) -> f64 {
        self.propagate(dist)
            .iter()
            .zip(dist)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Solves `πᵀ(I − T) = 0`, `Σπ = 1` by LU with the last balance
    /// equation replaced by the normalisation.
    pub fn stationary_dense(&self) -> Result<Vec<f64>> {
        let size = self.len();
        if size > DENSE_STATE_LIMIT {
            return Err(Error::Solver(format!(
                "{size} states exceed the dense limit of {DENSE_STATE_LIMIT}"
            )));
        }
        // Row `to` of (I − T)ᵀ holds the balance equation of state `to`.
        let mut a = DMatrix::<f64>::identity(size, size);
        for (from, row) in self.rows.iter().enumerate() {
            for &(to, p) in row {
                a[(to, from)] -= p;
            }
        }
        let last = size - 1;
        for col in 0..size {
            a[(last, col)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(size);
        b[last] = 1.0;
        let lu = a.clone().lu();
        let mut x = lu
            .solve(&b)
            .ok_or_else(|| Error::Solver("singular balance system".into()))?;
        // One round of iterative refinement.
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        Ok(x.iter().copied().collect())
    }

    /// Power iteration on the lazy chain `(I + T)/2`, which has the same
    /// stationary vector and is aperiodic even when `T` is not.
    pub fn stationary_power(&self, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
        let size = self.len();
        let mut dist = vec![1.0 / size as f64; size];
        for iter in 1..=max_iter {
            let stepped = self.propagate(&dist);
            let mut change = 0.0;
            for (d, s) in dist.iter_mut().zip(&stepped) {
                let next = 0.5 * (*d + s);
                change += (next - *d).abs();
                *d = next;
            }
            if change < tol {
                let total: f64 = dist.iter().sum();
                dist.iter_mut().for_each(|d| *d /= total);
                return Ok((dist, iter));
            }
        }
        Err(Error::Solver(format!(
            "power iteration did not converge in {max_iter} iterations"
        )))
    }
}

fn check_chain_params(n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidCount {
            name: "n",
            value: 0,
            expected: "at least one cycle",
        });
    }
    check_probability("p", p)?;
    Ok(())
}

/// The full `3n + 1` state chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainModel {
    n: usize,
    p: f64,
    transitions: TransitionMatrix,
}

impl MarkovChainModel {
    pub fn build(n: usize, p: f64) -> Result<Self> {
        check_chain_params(n, p)?;
        let q = 1.0 - p;
        let mut t = TransitionMatrix::new(3 * n + 1);
        let idx = |s: ChainState| state_index(n, s);
        use ChainState::*;

        t.add(0, idx(BothClosed(n)), p * p);
        t.add(0, idx(LeftClosed(n)), p * q);
        t.add(0, idx(RightClosed(n)), q * p);
        t.add(0, 0, q * q);

        for i in 1..=n {
            if i == 1 {
                // Timeout; a success on the open side during this last closed
                // cycle is discarded along with it.
                t.add(idx(LeftClosed(1)), 0, 1.0);
                t.add(idx(RightClosed(1)), 0, 1.0);
                t.add(idx(BothClosed(1)), 0, 1.0);
            } else {
                // A late success on the open side is doomed: both sides
                // reopen together when the first side times out.
                t.add(idx(LeftClosed(i)), idx(BothClosed(i - 1)), p);
                t.add(idx(LeftClosed(i)), idx(LeftClosed(i - 1)), q);
                t.add(idx(RightClosed(i)), idx(BothClosed(i - 1)), p);
                t.add(idx(RightClosed(i)), idx(RightClosed(i - 1)), q);
                t.add(idx(BothClosed(i)), idx(BothClosed(i - 1)), 1.0);
            }
        }
        Ok(Self { n, p, transitions: t })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.transitions
    }

    pub fn index_of(&self, state: ChainState) -> usize {
        state_index(self.n, state)
    }

    pub fn state_at(&self, index: usize) -> ChainState {
        let n = self.n;
        match index {
            0 => ChainState::Open,
            i if i <= n => ChainState::LeftClosed(i),
            i if i <= 2 * n => ChainState::RightClosed(i - n),
            i => ChainState::BothClosed(i - 2 * n),
        }
    }

    /// Transition probability between two labelled states.
    pub fn probability(&self, from: ChainState, to: ChainState) -> f64 {
        let to = self.index_of(to);
        self.transitions
            .row(self.index_of(from))
            .iter()
            .filter(|&&(t, _)| t == to)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Chain as JSON: `{"n", "p", "transitions": {from: {to: prob}}}`.
    pub fn to_json(&self) -> Value {
        let mut rows = Map::new();
        for from in 0..self.len() {
            let row: Map<String, Value> = self
                .transitions
                .row(from)
                .iter()
                .map(|&(to, p)| (self.state_at(to).to_string(), json!(p)))
                .collect();
            rows.insert(self.state_at(from).to_string(), Value::Object(row));
        }
        json!({ "n": self.n, "p": self.p, "transitions": rows })
    }

    /// Stationary vector as a `{label: probability}` object.
    pub fn distribution_json(&self, dist: &[f64]) -> Value {
        let map: Map<String, Value> = dist
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.state_at(i).to_string(), json!(v)))
            .collect();
        Value::Object(map)
    }
}

fn state_index(n: usize, state: ChainState) -> usize {
    match state {
        ChainState::Open => 0,
        ChainState::LeftClosed(i) => {
            debug_assert!((1..=n).contains(&i));
            i
        }
        ChainState::RightClosed(i) => {
            debug_assert!((1..=n).contains(&i));
            n + i
        }
        ChainState::BothClosed(i) => {
            debug_assert!((1..=n).contains(&i));
            2 * n + i
        }
    }
}

/// The `n + 1` state chain: `[i]` is the number of cycles until both
/// receivers are open again.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedChainModel {
    n: usize,
    p: f64,
    transitions: TransitionMatrix,
}

impl SimplifiedChainModel {
    pub fn build(n: usize, p: f64) -> Result<Self> {
        check_chain_params(n, p)?;
        let any = 2.0 * p - p * p;
        let mut t = TransitionMatrix::new(n + 1);
        t.add(0, n, any);
        t.add(0, 0, 1.0 - any);
        for i in 1..=n {
            t.add(i, i - 1, 1.0);
        }
        Ok(Self { n, p, transitions: t })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.transitions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    DenseLu,
    PowerIteration,
    /// `p ∈ {0, 1}`: written down directly.
    Degenerate,
}

/// Stationary distribution of a chain together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub probabilities: Vec<f64>,
    pub method: SolveMethod,
    /// `‖πᵀT − πᵀ‖∞` of the returned vector.
    pub residual: f64,
}

impl Stationary {
    /// `π(0,0)`, or `π[0]` for the simplified chain.
    pub fn pi0(&self) -> f64 {
        self.probabilities[0]
    }

    /// True when the chain is reducible or periodic (`p ∈ {0, 1}`).
    pub fn is_degenerate(&self) -> bool {
        self.method == SolveMethod::Degenerate
    }
}

fn solve(t: &TransitionMatrix) -> Result<(Vec<f64>, SolveMethod)> {
    if t.len() <= DENSE_STATE_LIMIT {
        Ok((t.stationary_dense()?, SolveMethod::DenseLu))
    } else {
        let (dist, _) = t.stationary_power(1e-14, 50_000_000)?;
        Ok((dist, SolveMethod::PowerIteration))
    }
}

/// Stationary distribution of the full chain.
///
/// For `p = 0` the open state is absorbing; for `p = 1` the chain cycles
/// deterministically through `(0,0), (n,n), …, (1,1)`. Both have a unique
/// stationary vector, returned with [`SolveMethod::Degenerate`].
pub fn stationary(chain: &MarkovChainModel) -> Result<Stationary> {
    let n = chain.n;
    let (probabilities, method) = if chain.p == 0.0 {
        let mut v = vec![0.0; chain.len()];
        v[0] = 1.0;
        (v, SolveMethod::Degenerate)
    } else if chain.p == 1.0 {
        let mut v = vec![0.0; chain.len()];
        let share = 1.0 / (n as f64 + 1.0);
        v[0] = share;
        for i in 1..=n {
            v[chain.index_of(ChainState::BothClosed(i))] = share;
        }
        (v, SolveMethod::Degenerate)
    } else {
        solve(&chain.transitions)?
    };
    let residual = chain.transitions.residual(&probabilities);
    Ok(Stationary {
        probabilities,
        method,
        residual,
    })
}

/// Stationary distribution of the simplified chain.
pub fn stationary_simplified(chain: &SimplifiedChainModel) -> Result<Stationary> {
    let (probabilities, method) = if chain.p == 0.0 {
        let mut v = vec![0.0; chain.n + 1];
        v[0] = 1.0;
        (v, SolveMethod::Degenerate)
    } else if chain.p == 1.0 {
        (vec![1.0 / (chain.n as f64 + 1.0); chain.n + 1], SolveMethod::Degenerate)
    } else {
        solve(&chain.transitions)?
    };
    let residual = chain.transitions.residual(&probabilities);
    Ok(Stationary {
        probabilities,
        method,
        residual,
    })
}

/// `π[0] = 1/(1 + n(2p − p²))`.
///
/// ```
/// # use midlink::markov::pi0_closed_form;
/// assert_eq!(pi0_closed_form(2, 0.5).unwrap(), 0.4);
/// ```
pub fn pi0_closed_form(n: usize, p: f64) -> Result<f64> {
    check_chain_params(n, p)?;
    Ok(1.0 / (1.0 + n as f64 * (2.0 * p - p * p)))
}

/// `π[i] = (1 − π[0])/n` for every `i ≥ 1`.
pub fn pi_level_closed_form(n: usize, p: f64) -> Result<f64> {
    Ok((1.0 - pi0_closed_form(n, p)?) / n as f64)
}

/// Sums each row `{(i,0), (0,i), (i,i)}` of a full-chain vector.
pub fn collapse(full: &[f64], n: usize) -> Result<Vec<f64>> {
    let expected = 3 * n + 1;
    if n == 0 || full.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: full.len(),
        });
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(full[0]);
    for i in 1..=n {
        out.push(full[i] + full[n + i] + full[2 * n + i]);
    }
    Ok(out)
}

/// Entanglement rate `β2·π(0,0)/τc` from the flux into `(n,n)`.
pub fn rate_from_stationary(pi00: f64, beta_2: f64, tau_c_s: f64) -> Result<f64> {
    check_probability("pi00", pi00)?;
    check_probability("beta_2", beta_2)?;
    check_positive("tau_c", tau_c_s)?;
    Ok(beta_2 * pi00 / tau_c_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use ChainState::*;

    #[test]
    fn smallest_chain_rows() {
        let c = MarkovChainModel::build(1, 0.5).unwrap();
        assert_eq!(c.len(), 4);
        for to in [BothClosed(1), LeftClosed(1), RightClosed(1), Open] {
            assert_eq!(c.probability(Open, to), 0.25);
        }
        assert_eq!(c.probability(LeftClosed(1), Open), 1.0);
    }

    #[test]
    fn rows_are_stochastic() {
        for n in [1, 2, 7, 40] {
            for p in [0.0, 0.01, 0.5, 0.99, 1.0] {
                let c = MarkovChainModel::build(n, p).unwrap();
                assert_eq!(c.len(), 3 * n + 1);
                assert!(c.transitions().max_row_error() < 1e-12);
                let s = SimplifiedChainModel::build(n, p).unwrap();
                assert!(s.transitions().max_row_error() < 1e-12);
            }
        }
    }

    #[test]
    fn labels_round_trip() {
        let c = MarkovChainModel::build(5, 0.3).unwrap();
        for i in 0..c.len() {
            assert_eq!(c.index_of(c.state_at(i)), i);
        }
        assert_eq!(c.state_at(0).to_string(), "(0,0)");
        assert_eq!(c.state_at(3).to_string(), "(3,0)");
        assert_eq!(c.state_at(8).to_string(), "(0,3)");
        assert_eq!(c.state_at(13).to_string(), "(3,3)");
    }

    #[test]
    fn zero_success_is_absorbing() {
        let c = MarkovChainModel::build(4, 0.0).unwrap();
        assert_eq!(c.probability(Open, Open), 1.0);
        let s = stationary(&c).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.pi0(), 1.0);
    }

    #[test]
    fn certain_success_alternates() {
        let c = MarkovChainModel::build(1, 1.0).unwrap();
        let s = stationary(&c).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.pi0(), 0.5);
        assert!(s.residual < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(MarkovChainModel::build(0, 0.5).is_err());
        assert!(MarkovChainModel::build(3, 1.5).is_err());
        assert!(pi0_closed_form(0, 0.5).is_err());
        assert!(collapse(&[1.0, 0.0], 1).is_err());
        assert!(rate_from_stationary(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let s = stationary(&MarkovChainModel::build(2, 0.5).unwrap()).unwrap();
        assert!((s.pi0() - 0.4).abs() < 1e-12);
        assert!(s.residual <= 1e-12);
        let c = collapse(&s.probabilities, 2).unwrap();
        for (got, want) in c.iter().zip([0.4, 0.3, 0.3]) {
            assert!((got - want).abs() < 1e-12);
        }

        let s = stationary(&MarkovChainModel::build(500, 0.01).unwrap()).unwrap();
        assert_eq!(s.method, SolveMethod::DenseLu);
        // 1/(1 + 500·0.0199) = 0.0913242…
        assert!((s.pi0() - 0.0913242).abs() < 1e-6);
        assert!((s.pi0() - pi0_closed_form(500, 0.01).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(pi0_closed_form(1, 1.0).unwrap(), 0.5);
        assert_eq!(pi0_closed_form(2, 0.5).unwrap(), 0.4);
        assert!((pi0_closed_form(500, 0.01).unwrap() - 1.0 / 10.95).abs() < 1e-15);
        assert!((pi_level_closed_form(2, 0.5).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn collapse_examples() {
        let n = 3;
        let uniform = vec![1.0 / 10.0; 3 * n + 1];
        let c = collapse(&uniform, n).unwrap();
        assert_eq!(c[0], 0.1);
        for v in &c[1..] {
            assert!((v - 0.3).abs() < 1e-15);
        }
        let s = stationary(&MarkovChainModel::build(n, 0.0).unwrap()).unwrap();
        assert_eq!(collapse(&s.probabilities, n).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rate_examples() {
        let pi = pi0_closed_form(500, 0.01).unwrap();
        let r = rate_from_stationary(pi, 1e-4, 500e-9).unwrap();
        assert!((r - 18.27).abs() < 0.01);
        assert!((r - crate::analytic::g2(1e-4, 250e-6, 500).unwrap()).abs() / r < 1e-12);
        assert_eq!(rate_from_stationary(1.0, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn power_iteration_agrees_with_lu() {
        for (n, p) in [(1, 0.3), (5, 0.5), (12, 0.1), (20, 0.9), (30, 0.01)] {
            let c = MarkovChainModel::build(n, p).unwrap();
            let dense = c.transitions().stationary_dense().unwrap();
            let (power, _) = c.transitions().stationary_power(1e-15, 10_000_000).unwrap();
            for (a, b) in dense.iter().zip(&power) {
                assert!((a - b).abs() < 1e-10, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn simplified_matches_collapsed() {
        for n in [1, 3, 10, 25] {
            for p in [0.01, 0.3, 0.9] {
                let full = stationary(&MarkovChainModel::build(n, p).unwrap()).unwrap();
                let simple = stationary_simplified(&SimplifiedChainModel::build(n, p).unwrap()).unwrap();
                let collapsed = collapse(&full.probabilities, n).unwrap();
                for (a, b) in collapsed.iter().zip(&simple.probabilities) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    /// Random walk on the chain: long-run frequency of `(0,0) → (n,n)`
    /// against the flux `p²π(0,0)`, with batch-means standard error.
    #[test]
    fn success_flux_matches_random_walk() {
        let (n, p) = (20, 0.2);
        let chain = MarkovChainModel::build(n, p).unwrap();
        let target = chain.index_of(BothClosed(n));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let steps = 1_000_000usize;
        let batches = 100;
        let mut counts = vec![0u64; batches];
        let mut state = 0usize;
        for step in 0..steps {
            let u: f64 = rng.random();
            let row = chain.transitions().row(state);
            let mut acc = 0.0;
            let mut next = row.last().unwrap().0;
            for &(to, prob) in row {
                acc += prob;
                if u < acc {
                    next = to;
                    break;
                }
            }
            if state == 0 && next == target {
                counts[step * batches / steps] += 1;
            }
            state = next;
        }
        let per_batch = (steps / batches) as f64;
        let means: Vec<f64> = counts.iter().map(|&c| c as f64 / per_batch).collect();
        let mean = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        let flux = p * p * pi0_closed_form(n, p).unwrap();
        assert!((mean - flux).abs() < 3.0 * se, "mean={mean} flux={flux} se={se}");
    }

    #[test]
    fn json_export_uses_labels() {
        let c = MarkovChainModel::build(1, 0.5).unwrap();
        let v = c.to_json();
        assert_eq!(v["transitions"]["(0,0)"]["(1,1)"], json!(0.25));
        assert_eq!(v["transitions"]["(1,0)"]["(0,0)"], json!(1.0));
        let s = stationary(&c).unwrap();
        let d = c.distribution_json(&s.probabilities);
        assert!(d.get("(1,1)").is_some());
        assert_eq!(d.as_object().unwrap().len(), 4);
    }
}
