use fsi_core::mortality::{lifetable_to_quantile, Lifetable, Smoothing, RADIX};
use fsi_core::QuantileGrid;

const LO: f64 = 20.0;
const HI: f64 = 110.0;

/// Beta(6, 4) age-at-death density on [20, 110], unnormalized.
fn density(age: f64) -> f64 {
    let s = (age - LO) / (HI - LO);
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    s.powi(5) * (1.0 - s).powi(3)
}

/// CDF by composite Simpson quadrature of the density.
fn cdf(age: f64) -> f64 {
    let simpson = |a: f64, b: f64| {
        let m = 2000;
        let step = (b - a) / m as f64;
        let mut s = density(a) + density(b);
        for k in 1..m {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * density(a + k as f64 * step);
        }
        s * step / 3.0
    };
    simpson(LO, age.clamp(LO, HI)) / simpson(LO, HI)
}

fn quantile(t: f64) -> f64 {
    let (mut a, mut b) = (LO, HI);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if cdf(mid) < t {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[test]
fn beta_lifetable_quantiles_are_recovered() {
    let ages: Vec<f64> = (0..=110).map(f64::from).collect();
    let survivors: Vec<f64> = ages.iter().map(|&a| RADIX * (1.0 - cdf(a))).collect();
    let lt = Lifetable::new("beta", ages, survivors).unwrap();
    let grid = QuantileGrid::uniform_grid(101);
    let q = lifetable_to_quantile(&lt, (LO, HI), &grid, Smoothing::Bandwidth(2.0)).unwrap();
    // Kernel smoothing bias grows where the density thins out.
    let (mut bulk, mut tails) = (0.0f64, 0.0f64);
    for (&t, &v) in grid.iter().zip(q.values()) {
        let err = (v - quantile(t)).abs();
        if (0.1..=0.9).contains(&t) {
            bulk = bulk.max(err);
        } else {
            tails = tails.max(err);
        }
    }
    assert!(bulk < 0.2, "bulk error {bulk}");
    assert!(tails < 1.0, "tail error {tails}");
}

#[test]
fn unsmoothed_quantiles_interpolate_the_histogram() {
    // All deaths in [60, 62): uniform on that interval.
    let ages: Vec<f64> = (0..=110).map(f64::from).collect();
    let survivors: Vec<f64> = ages
        .iter()
        .map(|&a| if a <= 60.0 { RADIX } else if a <= 61.0 { RADIX / 2.0 } else { 0.0 })
        .collect();
    let lt = Lifetable::new("step", ages, survivors).unwrap();
    let grid = QuantileGrid::uniform_grid(5);
    let q = lifetable_to_quantile(&lt, (LO, HI), &grid, Smoothing::None).unwrap();
    let expected = [60.0, 60.5, 61.0, 61.5, 62.0];
    for (got, want) in q.values().iter().zip(expected) {
        assert!((got - want).abs() < 1e-9, "{:?}", q.values());
    }
}
