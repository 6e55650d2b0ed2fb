use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalError, RatingRecord, System};

/// Published means and standard deviations per system.
pub const TABLE1: [(System, f64, f64); 2] = [
    (System::Baseline, 3.39, 1.67),
    (System::Proposed, 4.48, 1.70),
];

const PARTICIPANTS: usize = 30;
const SAMPLES_PER_SYSTEM: usize = 10;

/// `n` scores in 1..=7 whose sum is `round(n * mean)` and whose sum of
/// squares is the attainable value closest to `(n - 1) * sd^2 + sum^2 / n`.
/// Sorted ascending.
pub fn moment_matched_scores(n: usize, mean: f64, sd: f64) -> Result<Vec<u8>, EvalError> {
    if n < 2 || !(1.0..=7.0).contains(&mean) || !(sd >= 0.0) {
        return Err(EvalError::Param(format!(
            "cannot match n={n}, mean={mean}, sd={sd}"
        )));
    }
    let sum = (mean * n as f64).round() as i64;
    let base = sum / n as i64;
    let ups = (sum - base * n as i64) as usize;
    let mut scores: Vec<i64> = (0..n)
        .map(|i| if i < ups { base + 1 } else { base })
        .collect();

    // squares share the parity of the values, so the target keeps sum's parity
    let ideal = (n - 1) as f64 * sd * sd + (sum * sum) as f64 / n as f64;
    let lower = ideal.floor() as i64;
    let target = [lower - 1, lower, lower + 1, lower + 2]
        .into_iter()
        .filter(|t| (t - sum).rem_euclid(2) == 0)
        .min_by(|a, b| {
            let da = (*a as f64 - ideal).abs();
            let db = (*b as f64 - ideal).abs();
            da.total_cmp(&db)
        })
        .expect("two candidates share the parity");
    let mut ss: i64 = scores.iter().map(|s| s * s).sum();
    if target < ss {
        return Err(EvalError::Param(format!("sd {sd} is below the attainable minimum")));
    }

    // a spread move (a, b) -> (a - 1, b + 1) with a <= b adds 2 (b - a + 1)
    while ss < target {
        let rem = target - ss;
        scores.sort_unstable();
        let mut best: Option<(usize, usize, i64)> = None;
        for i in 0..n {
            if scores[i] <= 1 || (i > 0 && scores[i] == scores[i - 1]) {
                continue;
            }
            for j in (i + 1..n).rev() {
                if scores[j] >= 7 || (j + 1 < n && scores[j] == scores[j + 1]) {
                    continue;
                }
                let gain = 2 * (scores[j] - scores[i] + 1);
                if gain <= rem && best.is_none_or(|b| gain > b.2) {
                    best = Some((i, j, gain));
                }
            }
        }
        let (i, j, gain) = best.ok_or_else(|| {
            EvalError::Param(format!("sd {sd} is above the attainable maximum"))
        })?;
        scores[i] -= 1;
        scores[j] += 1;
        ss += gain;
    }
    scores.sort_unstable();
    Ok(scores.into_iter().map(|s| s as u8).collect())
}

/// 600 records: 30 participants each rating 10 samples of both systems,
/// with per-system moments matching the published table. Scores are
/// dealt to (participant, sample) slots in a seeded random order.
pub fn table1_fixture(seed: u64) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = PARTICIPANTS * SAMPLES_PER_SYSTEM;
    let mut out = Vec::with_capacity(2 * n);
    for (system, mean, sd) in TABLE1 {
        let mut scores = moment_matched_scores(n, mean, sd).expect("published moments are attainable");
        scores.shuffle(&mut rng);
        for (i, score) in scores.into_iter().enumerate() {
            let (p, k) = (i / SAMPLES_PER_SYSTEM, i % SAMPLES_PER_SYSTEM);
            out.push(RatingRecord {
                participant: format!("participant-{p:02}"),
                sample: format!("{system}_{k:03}"),
                system,
                score,
                ts: (out.len() as u64 + 1) * 1000,
            });
        }
    }
    out
}
