//! The order book state machine.
//!
//! Orders are unit sized and prices are a.s. distinct, so each side is just an
//! ordered set of prices. A side may additionally sit on a reservoir: an
//! infinite supply at one price that absorbs executions without depleting.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::BinPartition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub side: Side,
    pub price: f64,
    pub seq: u64,
}

impl Order {
    pub fn bid(price: f64, seq: u64) -> Self {
        Self { side: Side::Bid, price, seq }
    }

    pub fn ask(price: f64, seq: u64) -> Self {
        Self { side: Side::Ask, price, seq }
    }
}

/// How an arriving order decides whether to execute.
#[derive(Clone, Debug, PartialEq)]
pub enum MatchRule {
    /// Execute iff the arrival crosses the opposite best price.
    Ordinary,
    /// Also execute when the arrival shares a bin with the opposite best price.
    OrdinaryBinned(BinPartition),
    /// Execute only when the arrival crosses and lands in a different bin.
    StrictBinned(BinPartition),
}

impl MatchRule {
    pub fn partition(&self) -> Option<&BinPartition> {
        match self {
            MatchRule::Ordinary => None,
            MatchRule::OrdinaryBinned(p) | MatchRule::StrictBinned(p) => Some(p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MatchRule::Ordinary => "ordinary",
            MatchRule::OrdinaryBinned(_) => "ordinary_binned",
            MatchRule::StrictBinned(_) => "strict_binned",
        }
    }

    /// Does an arrival at `p` on `side` execute against the opposite best `best`?
    #[inline]
    fn executes(&self, side: Side, p: f64, best: f64) -> bool {
        if !best.is_finite() {
            return false;
        }
        let crosses = match side {
            Side::Bid => p > best,
            Side::Ask => p < best,
        };
        match self {
            MatchRule::Ordinary => crosses,
            MatchRule::OrdinaryBinned(part) => crosses || part.bin_of(p) == part.bin_of(best),
            MatchRule::StrictBinned(part) => crosses && part.bin_of(p) != part.bin_of(best),
        }
    }

    /// Whether `(beta, alpha)` is a state this rule can reach.
    fn consistent(&self, beta: f64, alpha: f64) -> bool {
        if !beta.is_finite() || !alpha.is_finite() {
            return true;
        }
        match self {
            MatchRule::Ordinary => beta < alpha,
            MatchRule::OrdinaryBinned(part) => beta < alpha && part.bin_of(beta) < part.bin_of(alpha),
            MatchRule::StrictBinned(part) => {
                let (kb, ka) = (part.bin_of(beta), part.bin_of(alpha));
                kb < ka && beta < alpha || kb == ka && beta != alpha
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BookError {
    #[error("order price {0} is not finite")]
    NonFinitePrice(f64),
    #[error("price {0} already present in the book")]
    DuplicatePrice(f64),
    #[error("book invariant violated under {rule} rule: beta={beta}, alpha={alpha}")]
    Invariant { rule: &'static str, beta: f64, alpha: f64 },
    #[error("bid reservoir {bid} must lie below ask reservoir {ask}")]
    Reservoirs { bid: f64, ask: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Joined,
    Executed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalEffect {
    pub outcome: Outcome,
    /// Price of the resting order the arrival executed against.
    pub counterparty: Option<f64>,
    pub from_reservoir: bool,
    pub new_beta: f64,
    pub new_alpha: f64,
}

type Price = OrderedFloat<f64>;

/// Resting bids and asks plus optional reservoirs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BookState {
    bids: BTreeSet<Price>,
    asks: BTreeSet<Price>,
    bid_reservoir: Option<f64>,
    ask_reservoir: Option<f64>,
}

impl BookState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty book with an infinite supply of bids at `bid` and of asks at `ask`.
    pub fn with_reservoirs(bid: Option<f64>, ask: Option<f64>) -> Result<Self, BookError> {
        if let (Some(b), Some(a)) = (bid, ask) {
            if !(b < a) {
                return Err(BookError::Reservoirs { bid: b, ask: a });
            }
        }
        for p in bid.iter().chain(ask.iter()) {
            if !p.is_finite() {
                return Err(BookError::NonFinitePrice(*p));
            }
        }
        Ok(Self { bid_reservoir: bid, ask_reservoir: ask, ..Self::default() })
    }

    pub fn bid_reservoir(&self) -> Option<f64> {
        self.bid_reservoir
    }

    pub fn ask_reservoir(&self) -> Option<f64> {
        self.ask_reservoir
    }

    /// Highest bid, counting the reservoir, or −∞.
    #[inline]
    pub fn best_bid(&self) -> f64 {
        let top = self.bids.last().map(|p| p.0);
        match (top, self.bid_reservoir) {
            (Some(t), Some(r)) => t.max(r),
            (Some(t), None) => t,
            (None, Some(r)) => r,
            (None, None) => f64::NEG_INFINITY,
        }
    }

    /// Lowest ask, counting the reservoir, or +∞.
    #[inline]
    pub fn best_ask(&self) -> f64 {
        let top = self.asks.first().map(|p| p.0);
        match (top, self.ask_reservoir) {
            (Some(t), Some(r)) => t.min(r),
            (Some(t), None) => t,
            (None, Some(r)) => r,
            (None, None) => f64::INFINITY,
        }
    }

    pub fn n_bids(&self) -> usize {
        self.bids.len()
    }

    pub fn n_asks(&self) -> usize {
        self.asks.len()
    }

    pub fn bids(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.bids.iter().map(|p| p.0)
    }

    pub fn asks(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.asks.iter().map(|p| p.0)
    }

    pub fn contains(&self, side: Side, price: f64) -> bool {
        match side {
            Side::Bid => self.bids.contains(&OrderedFloat(price)),
            Side::Ask => self.asks.contains(&OrderedFloat(price)),
        }
    }

    fn occupied(&self, p: f64) -> bool {
        let k = OrderedFloat(p);
        self.bids.contains(&k) || self.asks.contains(&k) || self.bid_reservoir == Some(p) || self.ask_reservoir == Some(p)
    }

    /// Places a resting order without matching. Used to build initial states.
    pub fn insert(&mut self, side: Side, price: f64) -> Result<(), BookError> {
        if !price.is_finite() {
            return Err(BookError::NonFinitePrice(price));
        }
        if self.occupied(price) {
            return Err(BookError::DuplicatePrice(price));
        }
        match side {
            Side::Bid => self.bids.insert(OrderedFloat(price)),
            Side::Ask => self.asks.insert(OrderedFloat(price)),
        };
        Ok(())
    }

    /// Removes a resting order; returns whether it was present.
    pub fn remove(&mut self, side: Side, price: f64) -> bool {
        match side {
            Side::Bid => self.bids.remove(&OrderedFloat(price)),
            Side::Ask => self.asks.remove(&OrderedFloat(price)),
        }
    }

    /// Whether the current best prices are reachable under `rule`.
    pub fn is_consistent(&self, rule: &MatchRule) -> bool {
        rule.consistent(self.best_bid(), self.best_ask())
    }

    /// Number of bids at prices ≤ p and asks at prices ≥ p, reservoirs excluded.
    pub fn counts(&self, p: f64) -> (usize, usize) {
        let k = OrderedFloat(p);
        (self.bids.range(..=k).count(), self.asks.range(k..).count())
    }

    /// Applies one arriving order under `rule`.
    pub fn apply_arrival(&mut self, rule: &MatchRule, order: Order) -> Result<ArrivalEffect, BookError> {
        let p = order.price;
        if !p.is_finite() {
            return Err(BookError::NonFinitePrice(p));
        }
        let opposite = match order.side {
            Side::Bid => self.best_ask(),
            Side::Ask => self.best_bid(),
        };
        let (outcome, counterparty, from_reservoir) = if rule.executes(order.side, p, opposite) {
            let reservoir = match order.side {
                Side::Bid => self.ask_reservoir,
                Side::Ask => self.bid_reservoir,
            };
            let from_reservoir = reservoir == Some(opposite);
            if !from_reservoir {
                match order.side {
                    Side::Bid => self.asks.pop_first(),
                    Side::Ask => self.bids.pop_last(),
                };
            }
            (Outcome::Executed, Some(opposite), from_reservoir)
        } else {
            self.insert(order.side, p)?;
            (Outcome::Joined, None, false)
        };
        let (beta, alpha) = (self.best_bid(), self.best_ask());
        if !rule.consistent(beta, alpha) {
            return Err(BookError::Invariant { rule: rule.name(), beta, alpha });
        }
        Ok(ArrivalEffect { outcome, counterparty, from_reservoir, new_beta: beta, new_alpha: alpha })
    }

    /// Writes `side,price,multiplicity` rows; reservoirs have multiplicity `inf`.
    pub fn write_snapshot<W: Write>(&self, w: W) -> Result<(), BookError> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| BookError::Snapshot(e.to_string());
        wtr.write_record(["side", "price", "multiplicity"]).map_err(err)?;
        if let Some(r) = self.bid_reservoir {
            wtr.write_record(["bid", &r.to_string(), "inf"]).map_err(err)?;
        }
        for p in self.bids() {
            wtr.write_record(["bid", &p.to_string(), "1"]).map_err(err)?;
        }
        for p in self.asks() {
            wtr.write_record(["ask", &p.to_string(), "1"]).map_err(err)?;
        }
        if let Some(r) = self.ask_reservoir {
            wtr.write_record(["ask", &r.to_string(), "inf"]).map_err(err)?;
        }
        wtr.flush().map_err(|e| BookError::Snapshot(e.to_string()))
    }

    pub fn read_snapshot<R: Read>(r: R) -> Result<Self, BookError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(r);
        let (mut bid_res, mut ask_res) = (None, None);
        let mut orders = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| BookError::Snapshot(e.to_string()))?;
            let side = match rec.get(0) {
                Some("bid") => Side::Bid,
                Some("ask") => Side::Ask,
                other => return Err(BookError::Snapshot(format!("bad side {other:?}"))),
            };
            let price: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| BookError::Snapshot("bad price".into()))?;
            match rec.get(2).unwrap_or("1") {
                "inf" => match side {
                    Side::Bid => bid_res = Some(price),
                    Side::Ask => ask_res = Some(price),
                },
                "1" => orders.push((side, price)),
                m => return Err(BookError::Snapshot(format!("bad multiplicity {m}"))),
            }
        }
        let mut book = Self::with_reservoirs(bid_res, ask_res)?;
        for (side, price) in orders {
            book.insert(side, price)?;
        }
        Ok(book)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tenths() -> BinPartition {
        BinPartition::uniform(10)
    }

    #[test]
    fn ask_into_empty_book_joins() {
        let mut b = BookState::new();
        let e = b.apply_arrival(&MatchRule::Ordinary, Order::ask(0.5, 0)).unwrap();
        assert_eq!(e.outcome, Outcome::Joined);
        assert_eq!(e.new_alpha, 0.5);
        assert_eq!(e.new_beta, f64::NEG_INFINITY);
    }

    #[test]
    fn crossing_ask_executes() {
        let mut b = BookState::new();
        b.insert(Side::Bid, 0.6).unwrap();
        let e = b.apply_arrival(&MatchRule::Ordinary, Order::ask(0.5, 1)).unwrap();
        assert_eq!(e.outcome, Outcome::Executed);
        assert_eq!(e.counterparty, Some(0.6));
        assert_eq!(e.new_beta, f64::NEG_INFINITY);
        assert_eq!(b.n_asks(), 0);
    }

    #[test]
    fn ordinary_binned_executes_within_bin() {
        let mut b = BookState::new();
        b.insert(Side::Ask, 0.57).unwrap();
        let e = b.apply_arrival(&MatchRule::OrdinaryBinned(tenths()), Order::bid(0.53, 1)).unwrap();
        assert_eq!(e.outcome, Outcome::Executed);
        assert_eq!(e.counterparty, Some(0.57));
    }

    #[test]
    fn strict_binned_joins_within_bin() {
        let mut b = BookState::new();
        b.insert(Side::Ask, 0.57).unwrap();
        let rule = MatchRule::StrictBinned(tenths());
        let e = b.apply_arrival(&rule, Order::bid(0.59, 1)).unwrap();
        assert_eq!(e.outcome, Outcome::Joined);
        assert_eq!(e.new_beta, 0.59);
        // a bid in a higher bin crosses and executes
        let e = b.apply_arrival(&rule, Order::bid(0.65, 2)).unwrap();
        assert_eq!(e.outcome, Outcome::Executed);
        assert_eq!(e.counterparty, Some(0.57));
    }

    #[test]
    fn reservoirs_are_not_depleted() {
        let mut b = BookState::with_reservoirs(Some(0.4), Some(0.6)).unwrap();
        let rule = MatchRule::Ordinary;
        for i in 0..5 {
            let e = b.apply_arrival(&rule, Order::ask(0.3, i)).unwrap();
            assert!(e.from_reservoir);
            assert_eq!(e.counterparty, Some(0.4));
        }
        let e = b.apply_arrival(&rule, Order::bid(0.2, 9)).unwrap();
        assert_eq!(e.outcome, Outcome::Joined);
        assert_eq!(b.best_bid(), 0.4);
        b.apply_arrival(&rule, Order::bid(0.5, 10)).unwrap();
        let e = b.apply_arrival(&rule, Order::ask(0.45, 11)).unwrap();
        assert!(!e.from_reservoir);
        assert_eq!(e.counterparty, Some(0.5));
        assert_eq!(b.counts(1.0), (1, 0));
        assert!(BookState::with_reservoirs(Some(0.6), Some(0.4)).is_err());
    }

    #[test]
    fn duplicate_price_is_an_error() {
        let mut b = BookState::new();
        b.apply_arrival(&MatchRule::Ordinary, Order::bid(0.3, 0)).unwrap();
        assert_eq!(b.apply_arrival(&MatchRule::Ordinary, Order::bid(0.3, 1)), Err(BookError::DuplicatePrice(0.3)));
    }

    #[test]
    fn counts_examples() {
        let mut b = BookState::new();
        assert_eq!(b.counts(0.5), (0, 0));
        b.insert(Side::Bid, 0.1).unwrap();
        b.insert(Side::Bid, 0.3).unwrap();
        b.insert(Side::Ask, 0.8).unwrap();
        assert_eq!(b.counts(0.2), (1, 1));
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut b = BookState::with_reservoirs(Some(0.2), Some(0.9)).unwrap();
        b.insert(Side::Bid, 0.31).unwrap();
        b.insert(Side::Ask, 0.7).unwrap();
        let mut buf = Vec::new();
        b.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("bid,0.2,inf"));
        assert_eq!(BookState::read_snapshot(buf.as_slice()).unwrap(), b);
    }
}
