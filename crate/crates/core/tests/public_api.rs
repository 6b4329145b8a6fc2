//! Exercises the public API against frozen arbitrary-precision references.

use rand_distr::{Distribution, StandardNormal};
use seqglr_core::bayes::log_marginal_likelihood;
use seqglr_core::exponential::{expected_m, m_stat};
use seqglr_core::gaussian::{bartlett_factor, d_stat, expected_d};
use seqglr_core::sim::substream;
use seqglr_core::special::{digamma, log_gamma};
use seqglr_core::{
    regression_h, run, shipped_table, DetectorConfig, GammaRatePrior, RunningSummary, StatisticKind, StatisticTracker,
    ThresholdSource,
};

const GAUSS: [f64; 10] = [0.3, -1.2, 2.5, 0.8, -0.4, 1.9, 3.1, 2.2, 2.8, 3.5];
const EXPO: [f64; 8] = [0.5, 2.0, 0.1, 1.3, 4.2, 0.7, 3.3, 2.9];

fn close(got: f64, want: f64, rel: f64) {
    assert!((got - want).abs() <= rel * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn d_matches_reference() {
    let global = RunningSummary::from_slice(&GAUSS).unwrap();
    for (k, want) in [
        (2, 6.392_025_561_645_705),
        (4, 3.085_631_569_002_926),
        (7, 6.754_162_982_472_718),
    ] {
        let prefix = RunningSummary::from_slice(&GAUSS[..k]).unwrap();
        close(d_stat(&prefix, &global).unwrap(), want, 1e-12);
    }
}

#[test]
fn m_matches_reference() {
    let total: f64 = EXPO.iter().sum();
    for (k, want) in [
        (1, 1.248_693_906_680_861),
        (3, 1.833_758_010_833_118),
        (6, 0.936_223_077_720_314_3),
    ] {
        let prefix: f64 = EXPO[..k].iter().sum();
        close(m_stat(prefix, k, total, EXPO.len()).unwrap(), want, 1e-12);
    }
}

#[test]
fn null_means_match_reference() {
    for (k, t, want) in [
        (2, 10, 3.986_451_955_094_312),
        (5, 50, 2.471_800_178_846_778),
        (100, 1000, 2.018_739_643_804_837),
        (3, 1_000_000, 2.948_042_319_034_592),
    ] {
        close(expected_d(k, t).unwrap(), want, 1e-12);
    }
    for (k, t, want) in [
        (1, 10, 1.156_277_040_107_543),
        (5, 50, 1.033_572_760_845_356),
        (100, 1000, 1.001_685_168_513_116),
        (1, 1_000_000, 1.154_431_329_803_232),
    ] {
        close(expected_m(k, t).unwrap(), want, 1e-12);
    }
}

#[test]
fn special_functions_and_marginal() {
    close(digamma(0.5).unwrap(), -1.963_510_026_021_423, 1e-14);
    close(log_gamma(0.5).unwrap(), 0.572_364_942_924_700_1, 1e-14);
    let prior = GammaRatePrior::new(2.0, 3.0).unwrap();
    close(
        log_marginal_likelihood(&prior, 4, 5.5).unwrap(),
        -5.855_680_660_859_359,
        1e-13,
    );
    assert!(log_marginal_likelihood(&GammaRatePrior::jeffreys(), 4, 5.5).is_err());
}

#[test]
fn tracker_agrees_with_pointwise_statistics() {
    let mut hz = StatisticTracker::new(StatisticKind::HzGaussian, None).unwrap();
    let mut corr = StatisticTracker::new(StatisticKind::CorrectedGaussian, None).unwrap();
    for &x in &GAUSS {
        hz.push(x).unwrap();
        corr.push(x).unwrap();
    }
    let global = RunningSummary::from_slice(&GAUSS).unwrap();
    let t = GAUSS.len();
    let scores: Vec<(usize, f64, f64)> = (2..=t - 2)
        .map(|k| {
            let d = d_stat(&RunningSummary::from_slice(&GAUSS[..k]).unwrap(), &global).unwrap();
            (
                k,
                d / bartlett_factor(k, t).unwrap(),
                2.0 * d / expected_d(k, t).unwrap(),
            )
        })
        .collect();
    let best_h = scores.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let best_c = scores.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
    let (v, k) = hz.max_statistic().unwrap();
    assert_eq!(k, best_h.0);
    close(v, best_h.1, 1e-10);
    let (v, k) = corr.max_statistic().unwrap();
    assert_eq!(k, best_c.0);
    close(v, best_c.2, 1e-10);

    let mut expo = StatisticTracker::new(StatisticKind::RawExponential, None).unwrap();
    for &x in &EXPO {
        expo.push(x).unwrap();
    }
    assert!(expo.max_statistic().unwrap().0 >= 1.833_758_010_833_118 - 1e-12);
    assert!(expo.push(0.0).is_err());
}

#[test]
fn detects_obvious_shift_with_each_threshold_source() {
    let mut rng = substream(5, 0);
    let stream: Vec<f64> = (0..120)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i < 60 {
                z
            } else {
                3.0 + z
            }
        })
        .collect();
    let sources = [
        ThresholdSource::Table(shipped_table(StatisticKind::CorrectedGaussian, 500).unwrap()),
        ThresholdSource::Regression { gamma: 0.002 },
        ThresholdSource::Fixed(20.0),
    ];
    for source in sources {
        let reports = run(
            stream.iter().copied(),
            &DetectorConfig::new(StatisticKind::CorrectedGaussian, source),
        )
        .unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].tau_hat.abs_diff(60) <= 2, "{reports:?}");
        assert!(
            reports[0].detection_time > 60 && reports[0].detection_time <= 70,
            "{reports:?}"
        );
    }
    assert!(regression_h(0.002, 800).unwrap() > 16.0);
}
