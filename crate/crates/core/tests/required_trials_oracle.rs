//! Cross-checks the analytic required-trials search against simulated
//! verification campaigns.

use chainhash_core::metrics::{at_least_two_prob, required_trials, SuccessVector, TrialsOutcome};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Trial (1-based) at which the second distinct question first succeeds.
fn second_success_trial(p: &[f64], rng: &mut StdRng, cap: u64) -> u64 {
    let mut firsts: Vec<u64> = p
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                return u64::MAX;
            }
            let u: f64 = rng.random();
            // geometric number of trials until first success
            ((1.0 - u).ln() / (1.0 - p).ln()).ceil().max(1.0).min(cap as f64 + 1.0) as u64
        })
        .collect();
    firsts.sort_unstable();
    firsts[1]
}

fn monte_carlo_required(p: &[f64], campaigns: usize, confidence: f64, cap: u64, seed: u64) -> Option<u64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hist = vec![0u64; cap as usize + 2];
    for _ in 0..campaigns {
        let t = second_success_trial(p, &mut rng, cap).min(cap + 1);
        hist[t as usize] += 1;
    }
    let mut acc = 0u64;
    for (n, &h) in hist.iter().enumerate().skip(1).take(cap as usize) {
        acc += h;
        if acc as f64 / campaigns as f64 >= confidence {
            return Some(n as u64);
        }
    }
    None
}

#[test]
fn uniform_tenth_agrees_with_simulation() {
    let p = [0.1; 10];
    let v = SuccessVector::new(p.to_vec()).unwrap();
    let TrialsOutcome::Trials(n) = required_trials(&v, 0.99, 1000).unwrap() else {
        panic!("expected trials");
    };
    let mc = monte_carlo_required(&p, 400_000, 0.99, 1000, 3).unwrap();
    assert!(n.abs_diff(mc) <= 1, "analytic {n}, simulated {mc}");
}

#[test]
fn single_trial_rate_matches_simulation() {
    let p = [0.41; 10];
    let mut rng = StdRng::seed_from_u64(17);
    let campaigns = 200_000;
    let hits = (0..campaigns)
        .filter(|_| p.iter().filter(|&&q| rng.random::<f64>() < q).count() >= 2)
        .count();
    let rate = hits as f64 / campaigns as f64;
    let want = at_least_two_prob(&SuccessVector::new(p.to_vec()).unwrap(), 1);
    let sigma = (want * (1.0 - want) / campaigns as f64).sqrt();
    assert!((rate - want).abs() < 3.0 * sigma, "{rate} vs {want}");
}
