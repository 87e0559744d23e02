mod common;

use common::{random_sequence, random_space, rng, schedule_cost, FAMILIES};
use pagemig::metric::{Metric, Point};
use pagemig::sequences::{AssumptionParams, AssumptionStatus, PredictionPair, RequestSequence};
use pagemig::simulation::run;
use pagemig::solver::{candidate_points, optimal_schedule, MoveTimes};
use pagemig::strategies::{
    coinflip_expected_cost, coinflip_online, delayed, lazy_multiples, lazy_predict_strategy, predict_strategy,
    robust_strategy, CoinFlip, FollowSchedule, Mode, Strategy, StrategyContext, StrategySpec,
};
use proptest::prelude::*;
use rand::{Rng, RngCore};

fn labels(seq: &[usize]) -> Vec<Point> {
    seq.iter().map(|&l| Point::Label(l)).collect()
}

fn uniform_seq(start: usize, seq: &[usize]) -> RequestSequence {
    RequestSequence::new(Point::Label(start), labels(seq))
}

fn positions(mut s: Box<dyn Strategy>, seq: &RequestSequence) -> Vec<Point> {
    let mut out = vec![s.start()];
    for t in 1..=seq.len() {
        out.push(s.step(t, &seq.at(t)));
    }
    out
}

/// Coins that always (or never) come up "move".
struct Rigged(u64);

impl RngCore for Rigged {
    fn next_u32(&mut self) -> u32 {
        self.0 as u32
    }
    fn next_u64(&mut self) -> u64 {
        self.0
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(self.0 as u8);
    }
}

#[test]
fn predict_on_a_wrong_prediction_moves_early() {
    let hat = uniform_seq(0, &[1, 1, 1]);
    let s = uniform_seq(0, &[0, 0, 0]);
    let c = labels(&[0, 1]);
    let mut p = predict_strategy(&hat, &Metric::Uniform, 2.0, &c).unwrap();
    let report = run(&mut p, &s, &Metric::Uniform, 2.0).unwrap();
    assert_eq!(report.schedule.move_times(), vec![1]);
    assert_eq!(report.ledger.total(), 2.0 + 3.0);
}

#[test]
fn predict_with_a_perfect_prediction_is_optimal() {
    for seed in 0..60 {
        let mut r = rng(seed);
        let family = FAMILIES[seed as usize % 3];
        let (metric, points) = random_space(&mut r, family, 5);
        let seq = random_sequence(&mut r, &points, 40);
        let d = r.random_range(1.5..12.0);
        let c = candidate_points(&seq, metric.all_points().as_ref().map(|_| &metric));
        let opt = optimal_schedule(&seq, &metric, d, &c, &MoveTimes::All).unwrap();
        let mut p = predict_strategy(&seq, &metric, d, &c).unwrap();
        assert_eq!(run(&mut p, &seq, &metric, d).unwrap().ledger.total(), opt.total_cost);
    }
}

#[test]
fn delay_arithmetic() {
    let c = labels(&[0, 1]);
    let s = uniform_seq(0, &[1; 10]);
    let inner = predict_strategy(&s, &Metric::Uniform, 2.0, &c).unwrap();
    assert_eq!(inner.schedule().move_times(), vec![1]);

    let moved = positions(Box::new(delayed(Box::new(inner.clone()), 3)), &s);
    let report =
        run(&mut FollowSchedule::new("x", pagemig::solver::Schedule::new(moved)), &s, &Metric::Uniform, 2.0).unwrap();
    assert_eq!(report.schedule.move_times(), vec![4]);

    assert_eq!(positions(Box::new(delayed(Box::new(inner.clone()), 0)), &s), inner.schedule().positions());
    let never = positions(Box::new(delayed(Box::new(inner), 10)), &s);
    assert!(never.iter().all(|p| *p == Point::Label(0)));
}

#[test]
fn lazy_multiples_trivial_cases() {
    let mut r = rng(4);
    let (metric, points) = random_space(&mut r, FAMILIES[1], 4);
    let seq = random_sequence(&mut r, &points, 30);
    let c = candidate_points(&seq, Some(&metric));
    let inner = predict_strategy(&seq, &metric, 3.0, &c).unwrap();
    assert_eq!(positions(Box::new(lazy_multiples(Box::new(inner.clone()), 1)), &seq), inner.schedule().positions());

    let stay = FollowSchedule::new("stay", pagemig::solver::Schedule::new(vec![seq.start(); 31]));
    let lazy = positions(Box::new(lazy_multiples(Box::new(stay), 7)), &seq);
    assert!(lazy.iter().all(|p| *p == seq.start()));
}

#[test]
fn lazy_predict_moves_only_on_multiples() {
    let mut r = rng(8);
    let (metric, points) = random_space(&mut r, FAMILIES[2], 6);
    let seq = random_sequence(&mut r, &points, 80);
    let c = candidate_points(&seq, None);
    let lazy = lazy_predict_strategy(&seq, &metric, 5.0, &c, 4).unwrap();
    assert!(lazy.schedule().move_times().iter().all(|t| t % 4 == 0));
    let free = optimal_schedule(&seq, &metric, 5.0, &c, &MoveTimes::All).unwrap();
    let lazy_cost = schedule_cost(lazy.schedule().positions(), &seq, &metric, 5.0);
    assert!(lazy_cost >= free.total_cost);
    assert!(lazy_cost <= (1.0 + 4.0 / 5.0) * free.total_cost + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn lazy_multiples_costs_at_most_one_plus_period_over_d(
        seed in any::<u64>(),
        family in 0..3usize,
        n in 1..120usize,
        d in 2.0..40.0f64,
        frac in 0.05..=1.0f64,
        randomized in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let (metric, points) = random_space(&mut r, FAMILIES[family], 5);
        let seq = random_sequence(&mut r, &points, n);
        let period = ((frac * d).round() as usize).max(1);
        let c = candidate_points(&seq, None);
        let make = || -> Box<dyn Strategy> {
            if randomized {
                Box::new(coinflip_online(seq.start(), d, seed))
            } else {
                Box::new(predict_strategy(&seq, &metric, d, &c).unwrap())
            }
        };
        let inner = run(make().as_mut(), &seq, &metric, d).unwrap().ledger.total();
        let mut lazy = lazy_multiples(make(), period);
        let lazy = run(&mut lazy, &seq, &metric, d).unwrap().ledger.total();
        prop_assert!(lazy <= (1.0 + period as f64 / d) * inner + 1e-6, "lazy {} inner {}", lazy, inner);
    }

    #[test]
    fn coinflip_only_moves_to_previous_requests(seed in any::<u64>(), n in 0..200usize, d in 1.1..5.0f64) {
        let mut r = rng(seed);
        let (metric, points) = random_space(&mut r, FAMILIES[2], 4);
        let seq = random_sequence(&mut r, &points, n);
        let report = run(&mut coinflip_online(seq.start(), d, seed), &seq, &metric, d).unwrap();
        for t in report.schedule.move_times() {
            prop_assert_eq!(report.schedule.at(t), seq.at(t - 1));
        }
        let again = run(&mut coinflip_online(seq.start(), d, seed), &seq, &metric, d).unwrap();
        prop_assert_eq!(report, again);
    }
}

#[test]
fn coinflip_with_rigged_coins() {
    let metric = Metric::Euclidean2d;
    let items = vec![Point::plane(1.0, 0.0), Point::plane(1.0, 2.0), Point::plane(4.0, 2.0), Point::plane(4.0, 5.0)];
    let seq = RequestSequence::new(Point::plane(0.0, 0.0), items);
    let d = 3.0;

    let mut never = CoinFlip::with_rng(seq.start(), d, Rigged(u64::MAX));
    let r = run(&mut never, &seq, &metric, d).unwrap();
    assert_eq!(r.ledger.total(), 1.0 + 5f64.sqrt() + 20f64.sqrt() + 41f64.sqrt());

    // The move decided after the last request is never carried out, so the
    // always-move cost is Σ serve + D·Σ moves over the first n-1 requests.
    let mut always = CoinFlip::with_rng(seq.start(), d, Rigged(0));
    let r = run(&mut always, &seq, &metric, d).unwrap();
    let serves = [1.0, 2.0, 3.0, 3.0];
    let moves = [0.0, 1.0, 2.0, 3.0];
    let expected: f64 = serves.iter().zip(moves).map(|(s, m)| s + d * m).sum();
    assert!((r.ledger.total() - expected).abs() < 1e-12);
    assert_eq!(r.schedule.at(4), Point::plane(4.0, 2.0));
}

/// Expected coin-flip cost by enumerating every coin outcome.
fn enumerate_coinflip(seq: &RequestSequence, metric: &Metric, d: f64) -> f64 {
    let p = 1.0 / (2.0 * d);
    fn go(seq: &RequestSequence, metric: &Metric, d: f64, p: f64, t: usize, pos: Point, pending: Option<Point>) -> f64 {
        if t > seq.len() {
            return 0.0;
        }
        let mut cost = 0.0;
        let mut here = pos;
        if let Some(to) = pending {
            cost += d * metric.distance(&here, &to).unwrap();
            here = to;
        }
        let s = seq.at(t);
        cost += metric.distance(&here, &s).unwrap();
        if here == s {
            cost + go(seq, metric, d, p, t + 1, here, None)
        } else {
            cost + p * go(seq, metric, d, p, t + 1, here, Some(s))
                + (1.0 - p) * go(seq, metric, d, p, t + 1, here, None)
        }
    }
    go(seq, metric, d, p, 1, seq.start(), None)
}

#[test]
fn coinflip_expectation_matches_enumeration_and_sampling() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let (metric, points) = random_space(&mut r, FAMILIES[seed as usize % 3], 4);
        let seq = random_sequence(&mut r, &points, 10);
        let d = r.random_range(1.2..4.0);
        let exact = coinflip_expected_cost(&seq, &metric, d);
        assert!((exact - enumerate_coinflip(&seq, &metric, d)).abs() < 1e-9 * exact.max(1.0));
    }
    let mut r = rng(99);
    let (metric, points) = random_space(&mut r, FAMILIES[0], 3);
    let seq = random_sequence(&mut r, &points, 200);
    let exact = coinflip_expected_cost(&seq, &metric, 2.0);
    let runs = 4000;
    let mean: f64 = (0..runs)
        .map(|s| run(&mut coinflip_online(seq.start(), 2.0, s), &seq, &metric, 2.0).unwrap().ledger.total())
        .sum::<f64>()
        / runs as f64;
    assert!((mean - exact).abs() < 0.02 * exact, "mean {mean} exact {exact}");
}

#[test]
fn coinflip_on_a_constant_far_sequence_is_near_three_competitive() {
    let seq = uniform_seq(0, &[1; 400]);
    let c = labels(&[0, 1]);
    let d = 10.0;
    let opt = optimal_schedule(&seq, &Metric::Uniform, d, &c, &MoveTimes::All).unwrap().total_cost;
    let mean = (0..100)
        .map(|s| run(&mut coinflip_online(seq.start(), d, s), &seq, &Metric::Uniform, d).unwrap().ledger.total())
        .sum::<f64>()
        / 100.0;
    assert!(mean / opt <= 3.2, "ratio {}", mean / opt);
}

fn robust_on(pair: &PredictionPair, params: AssumptionParams, seed: u64) -> pagemig::strategies::Robust {
    let c = candidate_points(pair.predicted(), Some(&Metric::Uniform));
    let online = Box::new(coinflip_online(pair.actual().start(), params.d(), seed));
    robust_strategy(pair.predicted(), params, online, &Metric::Uniform, &c).unwrap()
}

#[test]
fn robust_without_errors_is_the_delayed_prediction() {
    let hat = uniform_seq(0, &[1, 1, 2, 2, 2, 2, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2]);
    let pair = PredictionPair::new(hat.clone(), hat.clone()).unwrap();
    let params = AssumptionParams::new(4.0, 0.2, 1.0).unwrap();
    let mut robust = robust_on(&pair, params, 1);
    assert_eq!(robust.delay(), 5);
    let got = positions(Box::new(robust_on(&pair, params, 1)), &hat);
    let c = candidate_points(&hat, None);
    let inner = predict_strategy(&hat, &Metric::Uniform, 4.0, &c).unwrap();
    assert_eq!(got, positions(Box::new(delayed(Box::new(inner), 5)), &hat));
    let report = run(&mut robust, &hat, &Metric::Uniform, 4.0).unwrap();
    assert_eq!(report.switch_time, None);
    assert_eq!(robust.state().mode, Mode::Following);
}

#[test]
fn robust_switches_once_where_the_window_scan_first_fails() {
    let (n, q, d) = (400, 0.05, 40.0);
    let tail = 20;
    let adversarial: Vec<Point> = (0..tail).map(|i| Point::Label(1 + i % 2)).collect();
    let pair = pagemig::generators::suffix_adversary(n, q, &adversarial, Point::Label(0)).unwrap();
    let params = AssumptionParams::new(d, q, 1.0).unwrap();
    let expected = match pair.check_assumption(&params) {
        AssumptionStatus::Violated { at } => at,
        AssumptionStatus::Holds => panic!("suffix instance should violate"),
    };
    for seed in 0..10 {
        let mut robust = robust_on(&pair, params, seed);
        let report = run(&mut robust, pair.actual(), &Metric::Uniform, d).unwrap();
        assert_eq!(report.switch_time, Some(expected));
        assert_eq!(robust.state().mode, Mode::Switched);
        assert_eq!(robust.analysis_split(), Some(expected + 1 - 2));

        // After the switch the robust positions are the shadow baseline's.
        let shadow = run(&mut coinflip_online(Point::Label(0), d, seed), pair.actual(), &Metric::Uniform, d).unwrap();
        for t in expected..=n {
            assert_eq!(report.schedule.at(t), shadow.schedule.at(t));
        }
    }
}

#[test]
fn robust_cost_splits_at_the_switch() {
    let mut r = rng(3);
    let mut switched = 0;
    for seed in 0..40 {
        let n = 300;
        let hat = random_sequence(&mut r, &labels(&[0, 1, 2]), n);
        let tail = r.random_range(5..60);
        let mut items = hat.items().to_vec();
        for it in items.iter_mut().skip(n - tail) {
            *it = Point::Label(r.random_range(0..3));
        }
        let pair = PredictionPair::new(RequestSequence::new(hat.start(), items), hat.clone()).unwrap();
        let d = 8.0;
        let params = AssumptionParams::new(d, 0.1, 1.0).unwrap();
        let mut robust = robust_on(&pair, params, seed);
        let report = run(&mut robust, pair.actual(), &Metric::Uniform, d).unwrap();
        let Some(t) = report.switch_time else { continue };
        switched += 1;

        let c = candidate_points(&hat, Some(&Metric::Uniform));
        let lazy = run(
            &mut delayed(Box::new(predict_strategy(&hat, &Metric::Uniform, d, &c).unwrap()), robust.delay()),
            pair.actual(),
            &Metric::Uniform,
            d,
        )
        .unwrap();
        let online = run(&mut coinflip_online(Point::Label(0), d, seed), pair.actual(), &Metric::Uniform, d).unwrap();
        let (a, o) = (lazy.schedule.at(t - 1), online.schedule.at(t));
        let expected = lazy.ledger.prefix(t - 1)
            + d * Metric::Uniform.distance(&a, &o).unwrap()
            + Metric::Uniform.distance(&o, &pair.actual().at(t)).unwrap()
            + online.ledger.interval(t, n);
        assert!((report.ledger.total() - expected).abs() < 1e-9);
    }
    assert!(switched >= 20, "only {switched} runs switched");
}

#[test]
fn robust_bails_out_before_the_delayed_prediction_moves() {
    let n = 200;
    let hat = uniform_seq(0, &[1; 200]);
    let s = uniform_seq(0, &vec![0; n]);
    let pair = PredictionPair::new(s.clone(), hat).unwrap();
    let params = AssumptionParams::new(40.0, 0.05, 1.0).unwrap();
    let mut robust = robust_on(&pair, params, 5);
    assert_eq!(robust.delay(), 12);
    let report = run(&mut robust, &s, &Metric::Uniform, 40.0).unwrap();
    assert_eq!(report.switch_time, Some(3));
    let online = run(&mut coinflip_online(Point::Label(0), 40.0, 5), &s, &Metric::Uniform, 40.0).unwrap();
    assert!(report.ledger.total() <= online.ledger.total());
    assert_eq!(report.ledger.total(), 0.0);
}

#[test]
fn specs_build_the_named_strategies() {
    let hat = uniform_seq(0, &[1, 1, 0, 2, 2, 2, 2, 1]);
    let s = uniform_seq(0, &[1, 0, 0, 2, 2, 1, 2, 1]);
    let c = labels(&[0, 1, 2]);
    let ctx = StrategyContext { actual: &s, predicted: &hat, metric: &Metric::Uniform, d: 3.0, candidates: &c };
    let specs = [
        StrategySpec::Opt,
        StrategySpec::Predict,
        StrategySpec::LazyPredict { epsilon: 0.5 },
        StrategySpec::DelayedPredict { delay: Some(2), q: None },
        StrategySpec::DelayedPredict { delay: None, q: Some(0.1) },
        StrategySpec::Coinflip,
        StrategySpec::Robust { q: 0.2, epsilon: 1.0 },
    ];
    let opt = optimal_schedule(&s, &Metric::Uniform, 3.0, &c, &MoveTimes::All).unwrap().total_cost;
    for spec in &specs {
        let mut strategy = spec.build(&ctx, 7).unwrap();
        let report = run(strategy.as_mut(), &s, &Metric::Uniform, 3.0).unwrap();
        assert!(report.ledger.total() >= opt, "{} beat the optimum", spec.label());
        let json = serde_json::to_value(spec).unwrap();
        assert_eq!(json["name"], spec.label());
        assert_eq!(serde_json::from_value::<StrategySpec>(json).unwrap(), *spec);
    }
    assert!(StrategySpec::LazyPredict { epsilon: 0.0 }.build(&ctx, 0).is_err());
    assert!(StrategySpec::Robust { q: 1.5, epsilon: 1.0 }.build(&ctx, 0).is_err());
}
