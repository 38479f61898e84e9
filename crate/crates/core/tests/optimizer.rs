use memchan_core::channel::{ChannelParams, InputParams};
use memchan_core::entropy::g;
use memchan_core::optimize::{
    default_r_axis, max_over_ry, rate_at, sweep_n, sweep_r, OptimizerSettings, ThetaPolicy,
};

const NOISE: f64 = 2.0 / 3.0;

fn memoryless() -> f64 {
    g(2.0 + NOISE).unwrap() - g(NOISE).unwrap()
}

fn fig(n: usize, s: f64) -> ChannelParams {
    ChannelParams::with_default_epsilon(n, NOISE, s).unwrap()
}

#[test]
fn joint_optimum_stable_under_grid_doubling() {
    let coarse = OptimizerSettings::default();
    let fine = OptimizerSettings {
        y_grid: 2 * coarse.y_grid - 1,
        r_grid: 2 * coarse.r_grid - 1,
        ..coarse
    };
    let a = max_over_ry(&fig(3, 0.1), 2.0, &coarse).unwrap();
    let b = max_over_ry(&fig(3, 0.1), 2.0, &fine).unwrap();
    assert!((a.rate() - b.rate()).abs() < 1e-6, "{} vs {}", a.rate(), b.rate());
}

#[test]
fn reported_optima_are_feasible_and_dominant() {
    let settings = OptimizerSettings::default();
    for (n, s) in [(2, 0.1), (3, 0.2), (4, 0.0)] {
        let ch = fig(n, s);
        let opt = max_over_ry(&ch, 2.0, &settings).unwrap();
        ch.validate().unwrap();
        InputParams::with_default_theta(n, 2.0, opt.r, opt.y)
            .unwrap()
            .validate(n)
            .unwrap();
        for (r, y) in [(opt.r, 0.0), (0.0, opt.y), (0.0, 0.0)] {
            let other = rate_at(&ch, 2.0, r, y, ThetaPolicy::Auto).unwrap().rate;
            assert!(opt.rate() >= other, "n={n} s={s}: ({r}, {y}) gives {other}");
        }
    }
}

#[test]
fn r_sweep_shapes() {
    let settings = OptimizerSettings::default();
    let channels = [fig(2, 0.0), fig(2, 0.1), fig(2, 0.2)];
    let axis = default_r_axis(&channels[0], 2.0, ThetaPolicy::Auto, 41).unwrap();
    let axis: Vec<f64> = axis.into_iter().filter(|&r| r <= 0.6).collect();
    let sweep = sweep_r(&channels, 2.0, &axis, &settings).unwrap();
    assert!(sweep.skipped.is_empty());

    let curve = |s: f64| -> Vec<f64> { sweep.rows.iter().filter(|r| r.s == s).map(|r| r.rate).collect() };

    let flat = curve(0.0);
    assert!(flat.windows(2).all(|w| w[1] <= w[0] + 1e-12));

    let peaked = curve(0.2);
    let (imax, _) =
        peaked.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    assert!(imax > 0 && imax + 1 < peaked.len(), "maximum at index {imax}");

    for s in [0.0, 0.1, 0.2] {
        assert!(curve(s)[0] >= memoryless() - 1e-9);
    }
}

#[test]
fn n_sweep_shapes() {
    let settings = OptimizerSettings::default();
    let flat = sweep_n(&fig(2, 0.0), 2.0, &[2, 3, 4, 5], &settings).unwrap();
    for row in &flat.rows {
        assert!((row.rate - memoryless()).abs() < 1e-6);
        assert_eq!(row.r_opt, Some(row.r));
    }
    let growing = sweep_n(&fig(2, 0.2), 2.0, &[2, 3, 4, 5], &settings).unwrap();
    let rates: Vec<f64> = growing.rows.iter().map(|r| r.rate).collect();
    let inc: Vec<f64> = rates.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(inc.iter().all(|&d| d >= 0.0), "{rates:?}");
    assert!(inc.windows(2).all(|w| w[1] <= w[0]), "{inc:?}");
}

#[test]
fn rate_ordered_by_memory() {
    let settings = OptimizerSettings::default();
    for n in [2, 3] {
        let rates: Vec<f64> = [0.0, 0.1, 0.2]
            .iter()
            .map(|&s| max_over_ry(&fig(n, s), 2.0, &settings).unwrap().rate())
            .collect();
        assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "n={n}: {rates:?}");
    }
}

#[test]
fn sweeps_are_bit_identical_across_runs() {
    let settings = OptimizerSettings {
        y_grid: 65,
        r_grid: 33,
        ..Default::default()
    };
    let axis = [0.0, 0.05, 0.1, 0.15];
    let a = sweep_r(&[fig(3, 0.1), fig(3, 0.2)], 2.0, &axis, &settings).unwrap();
    let b = sweep_r(&[fig(3, 0.1), fig(3, 0.2)], 2.0, &axis, &settings).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| sweep_r(&[fig(3, 0.1), fig(3, 0.2)], 2.0, &axis, &settings).unwrap());
    assert_eq!(a, c);
}

#[test]
fn low_noise_channel_with_regulated_epsilon() {
    // N < 1/2: the default epsilon = 2N leaves V1 = 0 at s = 0, so no memory fits.
    let pinned = ChannelParams::with_default_epsilon(3, 0.3, 0.1).unwrap();
    assert_eq!(pinned.epsilon, 0.6);
    assert!(max_over_ry(&pinned, 1.0, &OptimizerSettings::default()).is_err());

    // An interior epsilon leaves room for memory.
    let ch = ChannelParams::new(3, 0.3, 0.1, 0.3).unwrap();
    let opt = max_over_ry(&ch, 1.0, &OptimizerSettings::default()).unwrap();
    let base = rate_at(&ch, 1.0, 0.0, 0.0, ThetaPolicy::Auto).unwrap().rate;
    assert!(opt.rate() > base);
    assert!(opt.r > 0.0);
}
