//! Slow reference implementations used to check the production code.
//! Nothing in here calls into the library.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stationary per-cycle hazards for the four-state oracle. Each table is
/// indexed by cycles since entering the state and held at its last value.
#[derive(Debug, Clone)]
pub struct DpOracleSpec {
    /// `(h_prog, h_death)` in first line.
    pub l1: Vec<(f64, f64)>,
    /// `(h_prog, h_death)` in second line.
    pub l2: Vec<(f64, f64)>,
    pub ed_death: Vec<f64>,
    pub p_direct_ed: f64,
    pub horizon: usize,
}

fn lookup<T: Copy>(table: &[T], k: usize) -> T {
    table[k.min(table.len() - 1)]
}

/// Exact survival at the start of cycles `0..=horizon`.
///
/// Probability mass is tracked per (state, entry cycle). Within a cycle death
/// comes first, then progression out of the survivors, so the unconditional
/// progression probability is `h_prog` itself.
pub fn exact_semi_markov_os(spec: &DpOracleSpec) -> Vec<f64> {
    let h = spec.horizon;
    let mut l1 = 1.0;
    let mut l2 = vec![0.0; h + 1];
    let mut ed = vec![0.0; h + 1];
    let mut surv = Vec::with_capacity(h + 1);
    surv.push(1.0);
    for c in 0..h {
        let mut dead = 0.0;

        let (hp, hd) = lookup(&spec.l1, c);
        dead += l1 * hd;
        let prog = l1 * hp;
        l1 -= l1 * hd + prog;
        ed[c + 1] += prog * spec.p_direct_ed;
        l2[c + 1] += prog * (1.0 - spec.p_direct_ed);

        for e in 0..=c {
            let m = l2[e];
            if m > 0.0 {
                let (hp, hd) = lookup(&spec.l2, c - e);
                dead += m * hd;
                ed[c + 1] += m * hp;
                l2[e] = m - m * hd - m * hp;
            }
            let m = ed[e];
            if m > 0.0 {
                let hd = lookup(&spec.ed_death, c - e);
                dead += m * hd;
                ed[e] = m - m * hd;
            }
        }
        surv.push(surv[c] - dead);
    }
    surv
}

/// Reference for the death/progression matcher: for each OS death, in
/// ascending (time, index) order, build the candidate set literally and
/// convert its earliest member. Codes are 0 censored, 1 event, 2 death.
pub fn brute_force_classify(
    pfs_times: &[f64],
    pfs_ind: &[u8],
    os_times: &[f64],
    os_ind: &[u8],
    epsilon: f64,
    death_is_event: bool,
) -> Vec<u8> {
    let m = if death_is_event { 1 } else { 0 };
    let mut codes = pfs_ind.to_vec();
    let mut done = vec![false; os_times.len()];
    loop {
        let mut next: Option<usize> = None;
        for i in 0..os_times.len() {
            if os_ind[i] != 1 || done[i] {
                continue;
            }
            next = match next {
                Some(k) if os_times[k] <= os_times[i] => Some(k),
                _ => Some(i),
            };
        }
        let Some(i) = next else { break };
        done[i] = true;
        let lo = os_times[i] - epsilon;
        let hi = os_times[i] + epsilon;
        let candidates: Vec<usize> = (0..pfs_times.len())
            .filter(|&j| codes[j] == m && lo <= pfs_times[j] && pfs_times[j] <= hi)
            .collect();
        let mut first: Option<usize> = None;
        for &j in &candidates {
            first = match first {
                Some(k) if pfs_times[k] <= pfs_times[j] => Some(k),
                _ => Some(j),
            };
        }
        if let Some(j) = first {
            codes[j] = 2;
        }
    }
    codes
}

/// Product-limit estimate as `(time, survival)` at each distinct event time.
pub fn kaplan_meier(times: &[f64], events: &[u8]) -> Vec<(f64, f64)> {
    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e == 1)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut s = 1.0;
    let mut out = Vec::new();
    for t in event_times {
        let at_risk = times.iter().filter(|&&x| x >= t).count() as f64;
        let d = times.iter().zip(events).filter(|(&x, &e)| x == t && e == 1).count() as f64;
        s *= 1.0 - d / at_risk;
        out.push((t, s));
    }
    out
}

/// Value of a right-continuous step function that starts at 1.
pub fn step_at(knots: &[(f64, f64)], t: f64) -> f64 {
    knots.iter().take_while(|k| k.0 <= t).last().map_or(1.0, |k| k.1)
}

/// Sup-norm distance between two survival step functions starting at 1.
pub fn sup_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&(t, _)| (step_at(a, t) - step_at(b, t)).abs())
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic for samples given as labels over
/// the pooled values sorted ascending (ties are not expected).
fn d_from_labels(labels: &[bool], n_a: usize, n_b: usize) -> f64 {
    let (mut ca, mut cb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    for &is_a in labels {
        if is_a {
            ca += 1.0;
        } else {
            cb += 1.0;
        }
        d = d.max((ca / n_a as f64 - cb / n_b as f64).abs());
    }
    d
}

pub fn two_sample_d(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let labels: Vec<bool> = pooled.iter().map(|p| p.1).collect();
    d_from_labels(&labels, a.len(), b.len())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Permutation p-value of the two-sample D statistic: exhaustive over all
/// splits when there are at most `permutations` of them, otherwise Monte
/// Carlo with that many random relabellings.
pub fn permutation_ks(a: &[f64], b: &[f64], permutations: usize, seed: u64) -> Result<f64, String> {
    if a.is_empty() || b.is_empty() {
        return Err("both samples must be non-empty".into());
    }
    let observed = two_sample_d(a, b);
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let hit = |d: f64| d >= observed - 1e-12;

    if binomial(n, n_a) <= permutations as f64 {
        // every size-n_a subset of positions in the sorted pool
        let (mut total, mut extreme) = (0u64, 0u64);
        let mut chosen: Vec<usize> = (0..n_a).collect();
        loop {
            let mut labels = vec![false; n];
            for &i in &chosen {
                labels[i] = true;
            }
            total += 1;
            if hit(d_from_labels(&labels, n_a, n_b)) {
                extreme += 1;
            }
            // next combination in lexicographic order
            let mut i = n_a;
            while i > 0 && chosen[i - 1] == n - n_a + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            chosen[i - 1] += 1;
            for j in i..n_a {
                chosen[j] = chosen[j - 1] + 1;
            }
        }
        return Ok(extreme as f64 / total as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_a).collect();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if hit(d_from_labels(&labels, n_a, n_b)) {
            extreme += 1;
        }
    }
    Ok(extreme as f64 / permutations as f64)
}
