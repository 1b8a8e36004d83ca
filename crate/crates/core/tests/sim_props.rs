use lobsim_core::book::{BookState, MatchRule, Order, Side};
use lobsim_core::dist::ArrivalSpec;
use lobsim_core::sim::{self, empirical_pi, estimate_kappa, ArrivalStream, RunOptions, TimeMode, TimedOrder};

/// κ for uniform arrivals from `w e^w = 1/e` by bisection.
fn kappa_oracle() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m * m.exp() < (-1.0f64).exp() {
            lo = m;
        } else {
            hi = m;
        }
    }
    let w = 0.5 * (lo + hi);
    w / (1.0 + w)
}

fn long_run() -> sim::Trace {
    let s = ArrivalStream::new(2024, 1_000_000, ArrivalSpec::uniform());
    sim::run_with(&MatchRule::Ordinary, BookState::new(), &s, &RunOptions::default()).unwrap()
}

#[test]
fn reflected_stream_gives_reflected_trace() {
    let s = ArrivalStream::new(9, 20_000, ArrivalSpec::uniform());
    let opts = RunOptions { record_every: 100, ..RunOptions::default() };
    let (a, _) = sim::run_orders(&MatchRule::Ordinary, BookState::new(), s.iter(), s.n_events, &opts).unwrap();
    let mirrored = s.iter().map(|e| TimedOrder { order: Order { side: e.order.side.opposite(), price: 1.0 - e.order.price, seq: e.order.seq }, time: e.time });
    let (b, _) = sim::run_orders(&MatchRule::Ordinary, BookState::new(), mirrored, s.n_events, &opts).unwrap();
    assert_eq!(a.checkpoints.len(), b.checkpoints.len());
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!((x.b_inf, x.a_inf), (y.a_inf, y.b_inf));
        assert!(x.beta == f64::NEG_INFINITY && y.alpha == f64::INFINITY || (x.beta - (1.0 - y.alpha)).abs() < 1e-15);
        assert!(x.alpha == f64::INFINITY && y.beta == f64::NEG_INFINITY || (x.alpha - (1.0 - y.beta)).abs() < 1e-15);
    }
    assert_eq!((a.bid_executions, a.ask_executions), (b.ask_executions, b.bid_executions));
}

#[test]
fn same_seed_same_trace() {
    for mode in [TimeMode::EventCount, TimeMode::Poisson] {
        let s = ArrivalStream::new(77, 30_000, ArrivalSpec::uniform()).with_time_mode(mode);
        let opts = RunOptions { mid_bins: Some((21, 79)), ..RunOptions::default() };
        let a = sim::run_with(&MatchRule::Ordinary, BookState::new(), &s, &opts).unwrap();
        let b = sim::run_with(&MatchRule::Ordinary, BookState::new(), &s.clone(), &opts).unwrap();
        assert_eq!(a, b);
    }
    let a: Vec<_> = ArrivalStream::new(1, 5, ArrivalSpec::uniform()).iter().collect();
    let b: Vec<_> = ArrivalStream::new(2, 5, ArrivalSpec::uniform()).iter().collect();
    assert_ne!(a, b);
}

#[test]
fn stored_bids_never_exceed_bid_arrivals() {
    let s = ArrivalStream::new(4, 50_000, ArrivalSpec::uniform());
    let tr = sim::run(&MatchRule::Ordinary, BookState::new(), &s, 250).unwrap();
    let mut bids = 0u64;
    let mut asks = 0u64;
    let mut cps = tr.checkpoints.iter().peekable();
    for (i, e) in s.iter().enumerate() {
        match e.order.side {
            Side::Bid => bids += 1,
            Side::Ask => asks += 1,
        }
        if let Some(c) = cps.next_if(|c| c.index == i as u64 + 1) {
            assert!(c.b_inf <= bids && c.a_inf <= asks);
            assert!(c.beta < c.alpha);
        }
    }
    assert!(cps.next().is_none());
}

#[test]
fn arrival_law() {
    let n = 1_000_000u64;
    let s = ArrivalStream::new(31, n, ArrivalSpec::uniform());
    let mut prices: Vec<f64> = s.iter().filter(|e| e.order.side == Side::Bid).map(|e| e.order.price).collect();
    let nb = prices.len() as f64;
    // 5σ of a fair binomial fraction
    assert!((nb / n as f64 - 0.5).abs() <= 5.0 * (0.25 / n as f64).sqrt());
    prices.sort_by(f64::total_cmp);
    let ks = prices.iter().enumerate().map(|(i, &p)| ((i + 1) as f64 / nb - p).abs().max((i as f64 / nb - p).abs())).fold(0.0, f64::max);
    assert!(ks <= 0.002, "KS {ks}");
}

#[test]
fn poisson_clock() {
    let n = 200_000u64;
    let s = ArrivalStream::new(8, n, ArrivalSpec::uniform()).with_time_mode(TimeMode::Poisson);
    let times: Vec<f64> = s.iter().map(|e| e.time).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    let last = *times.last().unwrap();
    // sum of n gaps of mean and sd 1/2
    assert!((last - 0.5 * n as f64).abs() <= 5.0 * 0.5 * (n as f64).sqrt());
    let tr = sim::run(&MatchRule::Ordinary, BookState::new(), &s, 0).unwrap();
    assert_eq!(tr.final_t, last);
    let k = estimate_kappa(&tr, &s.spec).unwrap();
    assert!((k.kappa_b_hat - kappa_oracle()).abs() < 0.05);
}

#[test]
fn occupation_measure() {
    let tr = long_run();
    let (pb, pa) = empirical_pi(&tr).unwrap();
    let kappa = kappa_oracle();
    // density of the best bid at 0.5 times the bin width
    let want = 2.0 * (1.0 - kappa) * 0.01;
    assert!((pb[50] - want).abs() <= 0.003, "{} vs {want}", pb[50]);
    for k in 0..100 {
        if (k + 1) as f64 * 0.01 <= kappa - 0.05 {
            assert!(pb[k] <= 0.001, "bin {k}: {}", pb[k]);
        }
    }
    assert!(pb.iter().sum::<f64>() <= 1.0 + 1e-12);
    assert!(pa.iter().sum::<f64>() <= 1.0 + 1e-12);
    let est = estimate_kappa(&tr, &ArrivalSpec::uniform()).unwrap();
    assert!((0.0..=1.0).contains(&est.fb_kappa_hat));
    assert!((est.kappa_b_hat - kappa).abs() <= 0.02);
    assert!((est.kappa_a_hat - (1.0 - kappa)).abs() <= 0.02);
}

#[test]
fn reservoirs_bound_the_estimate() {
    let s = ArrivalStream::new(6, 200_000, ArrivalSpec::uniform());
    let book = BookState::with_reservoirs(Some(0.4), Some(0.6)).unwrap();
    let tr = sim::run(&MatchRule::Ordinary, book, &s, 0).unwrap();
    let k = estimate_kappa(&tr, &s.spec).unwrap();
    assert!(k.kappa_b_hat >= 0.4 - 0.01, "{}", k.kappa_b_hat);
    assert!(k.kappa_a_hat <= 0.6 + 0.01, "{}", k.kappa_a_hat);
}
