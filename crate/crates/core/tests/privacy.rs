//! Distributional checks on the samplers and the budget arithmetic.

use statrs::distribution::{ContinuousCDF, Laplace, Normal};

use privdude::privacy::{
    composition_scale, gaussian_sigma, per_round_budget, sample_gaussian, sample_laplace, sv_accuracy_bound, Flag,
    SparseVector,
};
use privdude::rng::{substream, Purpose};

const DRAWS: usize = 100_000;

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn gaussian_sampler_matches_its_law() {
    for (std, seed) in [(1.0, 1u64), (293.0, 2), (1e-3, 3)] {
        let mut rng = substream(seed, Purpose::Scratch, &[]);
        let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gaussian(std, &mut rng).unwrap()).collect();
        let law = Normal::new(0.0, std).unwrap();
        let d = ks_statistic(xs, |x| law.cdf(x));
        assert!(d <= 0.01, "std {std}: KS {d}");
    }
}

#[test]
fn laplace_sampler_matches_its_law() {
    for (scale, seed) in [(1.0, 4u64), (8.0, 5), (0.25, 6)] {
        let mut rng = substream(seed, Purpose::Scratch, &[]);
        let xs: Vec<f64> = (0..DRAWS).map(|_| sample_laplace(scale, &mut rng).unwrap()).collect();
        let law = Laplace::new(0.0, scale).unwrap();
        let d = ks_statistic(xs, |x| law.cdf(x));
        assert!(d <= 0.01, "scale {scale}: KS {d}");
    }
}

#[test]
fn ledger_identities_hold_on_a_grid() {
    let epsilons = [1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 1e3];
    let deltas = [1e-9, 1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.49];
    let rounds = [1u64, 2, 3, 7, 10, 100, 997, 10_000, 123_457, 100_000_000];
    let mut checked = 0;
    for &e in &epsilons {
        for &d in &deltas {
            for &t in &rounds {
                let (ep, dp) = per_round_budget(e, d, t).unwrap();
                assert!(composition_scale(d, t) * ep <= e, "ε={e} δ={d} T={t}");
                assert!(2.0 * t as f64 * dp <= d, "ε={e} δ={d} T={t}");
                assert!(ep > 0.0 && dp > 0.0);
                let s = gaussian_sigma(1.0, ep, dp).unwrap();
                assert!(s * ep >= (2.0 * (1.25 / dp).ln()).sqrt() * (1.0 - 1e-15));
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn sparse_vector_is_accurate_far_from_threshold() {
    let (epsilon, k, beta) = (1.0, 100u64, 0.1);
    let alpha = sv_accuracy_bound(epsilon, k, beta).unwrap();
    let trials = 500;
    let mut failures = 0;
    for trial in 0..trials {
        let mut sv = SparseVector::new(epsilon, 0.0, substream(trial, Purpose::SparseVector, &[0])).unwrap();
        let mut ok = true;
        for i in 0..k {
            let last = i + 1 == k;
            let q = if last { alpha } else { -alpha };
            let flag = sv.query(q).unwrap();
            if (flag == Flag::Above) != last {
                ok = false;
                break;
            }
        }
        failures += usize::from(!ok);
    }
    assert!(failures as f64 <= beta * trials as f64, "{failures} failures");
}
