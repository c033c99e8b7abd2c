use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticGame;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::numerics::SeededRng;

/// Largest player count accepted by exact enumeration.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// A cooperative game on `players()` players; `members[i]` marks player `i`
/// as part of the coalition.
pub trait CoalitionGame: Sync {
    fn players(&self) -> usize;

    fn value(&self, members: &[bool]) -> Result<f64>;
}

/// Best wrong-class logit minus true-class logit at `x + delta`, lowest
/// index winning ties among the wrong classes.
pub fn reward(model: &dyn Classifier, x: &[f64], delta: &[f64], y: usize) -> Result<f64> {
    if model.num_classes() < 2 {
        return Err(Error::arg("reward needs at least two classes"));
    }
    if y >= model.num_classes() {
        return Err(Error::arg(format!("label {y} out of range")));
    }
    if delta.len() != x.len() {
        return Err(Error::Shape {
            expected: vec![x.len()],
            actual: vec![delta.len()],
        });
    }
    let input: Vec<f64> = x.iter().zip(delta).map(|(a, d)| a + d).collect();
    let h = model.logits(&input)?;
    let mut best = f64::NEG_INFINITY;
    for (k, &v) in h.iter().enumerate() {
        if k != y && v > best {
            best = v;
        }
    }
    Ok(best - h[y])
}

fn masked(delta: &[f64], members: &[bool]) -> Vec<f64> {
    delta.iter().zip(members).map(|(d, &m)| if m { *d } else { 0.0 }).collect()
}

/// Players are the coordinates of a perturbation; `v(S)` is the reward with
/// only the coordinates in `S` applied.
pub struct PerturbationGame<'a> {
    pub model: &'a dyn Classifier,
    pub x: &'a [f64],
    pub delta: &'a [f64],
    pub label: usize,
}

impl CoalitionGame for PerturbationGame<'_> {
    fn players(&self) -> usize {
        self.delta.len()
    }

    fn value(&self, members: &[bool]) -> Result<f64> {
        reward(self.model, self.x, &masked(self.delta, members), self.label)
    }
}

/// `v(S) = w(δ^S)` for the quadratic `w` of an [`AnalyticGame`].
pub struct QuadraticCoalition<'a> {
    pub game: &'a AnalyticGame,
    pub delta: &'a [f64],
}

impl CoalitionGame for QuadraticCoalition<'_> {
    fn players(&self) -> usize {
        self.delta.len()
    }

    fn value(&self, members: &[bool]) -> Result<f64> {
        self.game.value(&masked(self.delta, members))
    }
}

/// The game restricted to all players except `removed`.
struct Without<'a> {
    inner: &'a dyn CoalitionGame,
    removed: usize,
}

impl CoalitionGame for Without<'_> {
    fn players(&self) -> usize {
        self.inner.players() - 1
    }

    fn value(&self, members: &[bool]) -> Result<f64> {
        let mut full = members.to_vec();
        full.insert(self.removed, false);
        self.inner.value(&full)
    }
}

/// Players `a < b` merged into one player, placed at index `a`; later
/// players shift down past `b`.
struct Merged<'a> {
    inner: &'a dyn CoalitionGame,
    a: usize,
    b: usize,
}

impl CoalitionGame for Merged<'_> {
    fn players(&self) -> usize {
        self.inner.players() - 1
    }

    fn value(&self, members: &[bool]) -> Result<f64> {
        let mut full = members.to_vec();
        full.insert(self.b, members[self.a]);
        self.inner.value(&full)
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1u128; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as u128;
    }
    f.into_iter().map(|v| v as f64).collect()
}

fn check_exact(n: usize) -> Result<()> {
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::Resource(format!(
            "exact enumeration over {n} players exceeds the limit of {MAX_EXACT_PLAYERS}; use expected_interaction_sampled"
        )));
    }
    Ok(())
}

/// `Σ_{S ⊆ Ω∖{i}} |S|!(n−|S|−1)!/n! · (v(S ∪ {i}) − v(S))`.
pub fn shapley_value_exact(v: &dyn CoalitionGame, i: usize) -> Result<f64> {
    let n = v.players();
    check_exact(n)?;
    if i >= n {
        return Err(Error::arg(format!("player {i} out of range for {n} players")));
    }
    let fact = factorials(n);
    let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
    let mut total = 0.0;
    let mut members = vec![false; n];
    for mask in 0u32..(1u32 << others.len()) {
        let mut size = 0;
        for (bit, &k) in others.iter().enumerate() {
            let on = mask >> bit & 1 == 1;
            members[k] = on;
            size += on as usize;
        }
        members[i] = false;
        let without = v.value(&members)?;
        members[i] = true;
        let with = v.value(&members)?;
        total += fact[size] * fact[n - size - 1] / fact[n] * (with - without);
    }
    Ok(total)
}

/// `φ(S_ab | Ω′) − φ(a | Ω∖{b}) − φ(b | Ω∖{a})`, with `S_ab` a single
/// merged player in `Ω′`.
pub fn shapley_interaction_exact(v: &dyn CoalitionGame, a: usize, b: usize) -> Result<f64> {
    let n = v.players();
    check_exact(n)?;
    if a == b {
        return Err(Error::arg("interaction needs two distinct players"));
    }
    if a >= n || b >= n {
        return Err(Error::arg(format!("players ({a}, {b}) out of range for {n} players")));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let joint = shapley_value_exact(&Merged { inner: v, a: lo, b: hi }, lo)?;
    let only_a = shapley_value_exact(&Without { inner: v, removed: b }, if a < b { a } else { a - 1 })?;
    let only_b = shapley_value_exact(&Without { inner: v, removed: a }, if b < a { b } else { b - 1 })?;
    Ok(joint - only_a - only_b)
}

/// Weighted second differences `Σ_S w(|S|)·Δ_ab v(S)` over `S ⊆ Ω∖{a,b}`,
/// `w(s) = s!(n−2−s)!/(n−1)!`: the same index as
/// [`shapley_interaction_exact`], summed directly.
pub fn interaction_second_difference(v: &dyn CoalitionGame, a: usize, b: usize) -> Result<f64> {
    let n = v.players();
    check_exact(n)?;
    if a == b || a >= n || b >= n {
        return Err(Error::arg("interaction needs two distinct in-range players"));
    }
    let fact = factorials(n);
    let others: Vec<usize> = (0..n).filter(|&k| k != a && k != b).collect();
    let mut members = vec![false; n];
    let mut total = 0.0;
    for mask in 0u32..(1u32 << others.len()) {
        let mut size = 0;
        for (bit, &k) in others.iter().enumerate() {
            let on = mask >> bit & 1 == 1;
            members[k] = on;
            size += on as usize;
        }
        total += fact[size] * fact[n - 2 - size] / fact[n - 1] * second_difference(v, &mut members, a, b)?;
    }
    Ok(total)
}

fn second_difference(v: &dyn CoalitionGame, members: &mut [bool], a: usize, b: usize) -> Result<f64> {
    let mut eval = |ia: bool, ib: bool| {
        members[a] = ia;
        members[b] = ib;
        v.value(members)
    };
    Ok(eval(true, true)? - eval(true, false)? - eval(false, true)? + eval(false, false)?)
}

/// Mean of the exact interaction over all unordered pairs.
pub fn mean_interaction_exact(v: &dyn CoalitionGame) -> Result<f64> {
    let n = v.players();
    if n < 2 {
        return Err(Error::arg("interaction needs at least two players"));
    }
    let mut total = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            total += interaction_second_difference(v, a, b)?;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionEstimate {
    pub value: f64,
    pub std_error: f64,
    pub pairs: usize,
    pub subsets_per_pair: usize,
}

/// Monte Carlo estimate of the mean pairwise interaction: pairs uniform over
/// unordered distinct pairs; per pair, subset sizes uniform in `0..=n−2`
/// and subsets uniform at that size. The standard error is taken over the
/// per-pair means (within-pair when only one pair is drawn).
pub fn expected_interaction_sampled(
    v: &dyn CoalitionGame,
    num_pairs: usize,
    num_subsets: usize,
    rng: &mut SeededRng,
) -> Result<InteractionEstimate> {
    let n = v.players();
    if n < 2 {
        return Err(Error::arg("interaction needs at least two players"));
    }
    if num_pairs < 1 || num_subsets < 1 {
        return Err(Error::arg("sample counts must be ≥ 1"));
    }
    let tasks: Vec<(usize, usize, SeededRng)> = (0..num_pairs)
        .map(|k| {
            let p = rng.sample_indices(n, 2);
            (p[0], p[1], rng.fork(k as u64))
        })
        .collect();
    let per_pair = tasks
        .into_par_iter()
        .map(|(a, b, mut r)| {
            let others: Vec<usize> = (0..n).filter(|&k| k != a && k != b).collect();
            let mut members = vec![false; n];
            let mut samples = Vec::with_capacity(num_subsets);
            for _ in 0..num_subsets {
                members.iter_mut().for_each(|m| *m = false);
                let size = r.below(n - 1);
                for idx in r.sample_indices(others.len(), size) {
                    members[others[idx]] = true;
                }
                samples.push(second_difference(v, &mut members, a, b)?);
            }
            Ok(samples)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let means: Vec<f64> = per_pair.iter().map(|s| mean(s)).collect();
    let value = mean(&means);
    let std_error = if num_pairs > 1 {
        sample_sd(&means) / (num_pairs as f64).sqrt()
    } else {
        sample_sd(&per_pair[0]) / (num_subsets as f64).sqrt()
    };
    Ok(InteractionEstimate {
        value,
        std_error,
        pairs: num_pairs,
        subsets_per_pair: num_subsets,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
