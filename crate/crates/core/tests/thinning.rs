mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use thingp::thinning::{max_thinning_for, pacf, partition, select_thinning_number};
use thingp::{Dataset, Error};

use common::{ar1, normal_vec, ols_pacf, rng};

#[test]
fn ar1_pacf_matches_ols_oracle() {
    let s = ar1(0.5, 50_000, 11);
    let p = pacf(&s, 5).unwrap();
    for h in 1..=5 {
        let oracle = ols_pacf(&s, h);
        assert!(
            (p[h - 1] - oracle).abs() < 2e-3,
            "lag {h}: {} vs oracle {oracle}",
            p[h - 1]
        );
    }
    assert!((p[0] - 0.5).abs() < 0.02);
    assert!(p[1].abs() < 0.02);
}

#[test]
fn alternating_series_pacf_is_minus_one() {
    let s: Vec<f64> = (0..1000)
        .map(|i| if i % 2 == 0 { 1.0 } else { 2.0 })
        .collect();
    let oracle = ols_pacf(&s, 1);
    assert!((oracle + 1.0).abs() < 1e-9);
    let p = pacf(&s, 3).unwrap();
    assert!((p[0] - oracle).abs() < 0.01, "{} vs {oracle}", p[0]);
}

#[test]
fn white_noise_selects_one() {
    let mut r = rng(4);
    let n = 10_000;
    let x = DMatrix::from_fn(n, 3, |_, _| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r)
    });
    let y = normal_vec(&mut r, n);
    let t = (1..=n).map(|v| v as f64).collect();
    let ds = Dataset::new(x, y, t).unwrap();
    let choice = select_thinning_number(&ds, true, 100).unwrap();
    assert_eq!(choice.t, 1);
    assert!(!choice.saturated);
}

#[test]
fn ar1_covariate_thinning_agrees_with_oracle_scan() {
    let n = 50_000;
    let s = ar1(0.5, n, 21);
    let mut r = rng(22);
    let y = normal_vec(&mut r, n);
    let band = 2.0 / (n as f64).sqrt();
    // first lag where both series are inside the band, by OLS regressions
    let oracle = (1..=10)
        .find(|&h| ols_pacf(&s, h).abs() <= band && ols_pacf(&y, h).abs() <= band)
        .unwrap();
    assert!(oracle == 2 || oracle == 3, "oracle T = {oracle}");
    let ds = Dataset::new(
        DMatrix::from_column_slice(n, 1, &s),
        y,
        (1..=n).map(|v| v as f64).collect(),
    )
    .unwrap();
    let choice = select_thinning_number(&ds, true, 100).unwrap();
    assert_eq!(choice.t, oracle);
}

#[test]
fn max_thinning_matches_scan() {
    let scan = |n: usize, m: usize| (1..=n).filter(|t| n / t > m).max().unwrap();
    assert_eq!(max_thinning_for(45_000, 30).unwrap(), 1451);
    assert_eq!(scan(45_000, 30), 1451);
    assert_eq!(max_thinning_for(62, 30).unwrap(), 2);
    assert_eq!(max_thinning_for(31, 30).unwrap(), 1);
    assert!(matches!(
        max_thinning_for(30, 30),
        Err(Error::InvalidThinning(_))
    ));
    for n in 31..400 {
        for m in [1, 5, 30] {
            if n > m {
                assert_eq!(max_thinning_for(n, m).unwrap(), scan(n, m), "n={n} m={m}");
            }
        }
    }
}

#[test]
fn partition_fig_example() {
    let p = partition(10, 3).unwrap();
    // 0-based version of {1,4,7,10}, {2,5,8}, {3,6,9}
    assert_eq!(
        p.blocks(),
        &[vec![0, 3, 6, 9], vec![1, 4, 7], vec![2, 5, 8]]
    );
    assert!(matches!(partition(10, 11), Err(Error::InvalidThinning(_))));
    assert!(matches!(partition(10, 0), Err(Error::InvalidThinning(_))));
}

proptest! {
    #[test]
    fn partition_is_round_robin(n in 1usize..500, t_frac in 0.0f64..1.0) {
        let t = 1 + ((n - 1) as f64 * t_frac) as usize;
        let p = partition(n, t).unwrap();
        prop_assert_eq!(p.thinning(), t);
        prop_assert_eq!(p.n(), n);
        let mut seen = vec![false; n];
        for (z, b) in p.blocks().iter().enumerate() {
            prop_assert!(b.windows(2).all(|w| w[1] == w[0] + t));
            for &i in b {
                prop_assert!(!seen[i]);
                seen[i] = true;
                prop_assert_eq!(i % t, z);
                prop_assert_eq!(p.block_of(i), z);
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
        let sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn pacf_is_bounded(seed in 0u64..1000, n in 40usize..300) {
        let mut r = rng(seed);
        let s = normal_vec(&mut r, n);
        let p = pacf(&s, 10).unwrap();
        prop_assert!(p.iter().all(|v| v.abs() <= 1.0));
    }
}
