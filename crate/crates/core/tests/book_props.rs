use lobsim_core::book::{BookState, MatchRule, Order, Outcome, Side};
use lobsim_core::dist::BinPartition;
use proptest::prelude::*;

fn arb_orders(max: usize) -> impl Strategy<Value = Vec<Order>> {
    prop::collection::vec((any::<bool>(), 1e-6f64..1.0 - 1e-6), 0..max).prop_map(|v| {
        let mut seen = std::collections::HashSet::new();
        v.into_iter()
            .filter(|(_, p)| seen.insert(p.to_bits()))
            .enumerate()
            .map(|(i, (bid, p))| if bid { Order::bid(p, i as u64) } else { Order::ask(p, i as u64) })
            .collect()
    })
}

fn rules(n_bins: usize) -> Vec<MatchRule> {
    let part = BinPartition::uniform(n_bins);
    vec![MatchRule::Ordinary, MatchRule::OrdinaryBinned(part.clone()), MatchRule::StrictBinned(part)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn best_prices_stay_consistent(orders in arb_orders(300), n in 1usize..12) {
        for rule in rules(n) {
            let mut book = BookState::new();
            for o in &orders {
                book.apply_arrival(&rule, *o).unwrap();
                prop_assert!(book.is_consistent(&rule));
                // a strict book may cross inside one bin
                if !matches!(rule, MatchRule::StrictBinned(_)) {
                    prop_assert!(book.best_bid() < book.best_ask(), "{}", rule.name());
                }
            }
        }
    }

    #[test]
    fn conservation_and_pair_departures(orders in arb_orders(300), n in 1usize..12) {
        for rule in rules(n) {
            let mut book = BookState::new();
            let (mut bid_arr, mut ask_arr, mut bid_exec, mut ask_exec) = (0i64, 0i64, 0i64, 0i64);
            for o in &orders {
                let (nb, na) = (book.n_bids(), book.n_asks());
                let e = book.apply_arrival(&rule, *o).unwrap();
                match o.side {
                    Side::Bid => bid_arr += 1,
                    Side::Ask => ask_arr += 1,
                }
                if e.outcome == Outcome::Executed {
                    // exactly one resting order of the other side leaves
                    let c = e.counterparty.unwrap();
                    prop_assert!(!book.contains(o.side.opposite(), c));
                    match o.side {
                        Side::Bid => prop_assert_eq!((book.n_bids(), book.n_asks()), (nb, na - 1)),
                        Side::Ask => prop_assert_eq!((book.n_bids(), book.n_asks()), (nb - 1, na)),
                    }
                    bid_exec += 1;
                    ask_exec += 1;
                }
                prop_assert_eq!(bid_arr - bid_exec, book.n_bids() as i64);
                prop_assert_eq!(ask_arr - ask_exec, book.n_asks() as i64);
                prop_assert_eq!(book.n_bids() as i64 - book.n_asks() as i64, bid_arr - ask_arr);
            }
        }
    }

    #[test]
    fn monotone_transform_keeps_outcomes(orders in arb_orders(300), n in 1usize..12) {
        let g = |x: f64| x * x;
        let part = BinPartition::uniform(n);
        let mapped = BinPartition::new(0.0, 1.0, part.cuts().iter().map(|&c| g(c)).collect()).unwrap();
        let pairs = [
            (MatchRule::Ordinary, MatchRule::Ordinary),
            (MatchRule::OrdinaryBinned(part.clone()), MatchRule::OrdinaryBinned(mapped.clone())),
            (MatchRule::StrictBinned(part), MatchRule::StrictBinned(mapped)),
        ];
        for (r, rg) in pairs {
            let mut a = BookState::new();
            let mut b = BookState::new();
            for o in &orders {
                let ea = a.apply_arrival(&r, *o).unwrap();
                let eb = b.apply_arrival(&rg, Order { price: g(o.price), ..*o }).unwrap();
                prop_assert_eq!(ea.outcome, eb.outcome, "{}", r.name());
                prop_assert_eq!(ea.counterparty.map(g), eb.counterparty);
            }
        }
    }

    #[test]
    fn deterministic(orders in arb_orders(200), n in 2usize..12) {
        for rule in rules(n) {
            let mut a = BookState::with_reservoirs(Some(0.05), Some(0.95)).unwrap();
            let mut b = a.clone();
            let ea: Vec<_> = orders.iter().filter(|o| o.price > 0.05 && o.price < 0.95).map(|o| a.apply_arrival(&rule, *o).unwrap()).collect();
            let eb: Vec<_> = orders.iter().filter(|o| o.price > 0.05 && o.price < 0.95).map(|o| b.apply_arrival(&rule, *o).unwrap()).collect();
            prop_assert_eq!(ea, eb);
            prop_assert_eq!(a.bids().collect::<Vec<_>>(), b.bids().collect::<Vec<_>>());
        }
    }
}

#[test]
fn reservoir_orders_do_not_count() {
    let mut book = BookState::with_reservoirs(Some(0.1), Some(0.9)).unwrap();
    let e = book.apply_arrival(&MatchRule::Ordinary, Order::ask(0.05, 0)).unwrap();
    assert_eq!(e.outcome, Outcome::Executed);
    assert!(e.from_reservoir);
    assert_eq!((book.n_bids(), book.n_asks()), (0, 0));
    assert_eq!(book.best_bid(), 0.1);
}
