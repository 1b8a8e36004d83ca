//! Recurrence toolkit for small binned books.
//!
//! The 5-bin book with reservoirs in the outer bins reduces to a walk
//! `X ∈ ℤ³` over the middle bins (bids positive, asks negative). Its drift
//! depends only on the sign pattern of `X`, and a piecewise-linear Lyapunov
//! function built from one normal per pattern certifies positive recurrence
//! when every compatible drift/normal product is negative.

mod bounds;
mod fivebin;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::book::BookError;
use crate::dist::{DistError, PartitionError};
use crate::sim::SimError;

pub use bounds::{check_geometric_bound, running_max_evidence, GeometricReport, RunningMaxReport, TailRow};
pub use fivebin::{enumerate_drift, enumerated_table, five_bin_partition, simulate_5bin, FiveBinOptions, FiveBinReport, RegionStats};

pub type Q = Ratio<i64>;

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

pub fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

fn qi(n: i64) -> Q {
    Ratio::from_integer(n)
}

/// Sign pattern of the middle bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Region {
    Ppp,
    Ppm,
    Pmm,
    Mmm,
    Ppz,
    Pzm,
    Zmm,
    Pzz,
    Zzm,
    Zzz,
}

impl Region {
    pub const ALL: [Region; 10] =
        [Region::Ppp, Region::Ppm, Region::Pmm, Region::Mmm, Region::Ppz, Region::Pzm, Region::Zmm, Region::Pzz, Region::Zzm, Region::Zzz];

    /// The nine patterns that carry a drift and a normal.
    pub const ACTIVE: [Region; 9] =
        [Region::Ppp, Region::Ppm, Region::Pmm, Region::Mmm, Region::Ppz, Region::Pzm, Region::Zmm, Region::Pzz, Region::Zzm];

    /// Normals entering the Lyapunov function, with repeats as printed.
    pub const LYAPUNOV: [Region; 7] = [Region::Ppm, Region::Pmm, Region::Ppz, Region::Pzz, Region::Pzm, Region::Zmm, Region::Zzm];

    pub fn code(self) -> &'static str {
        match self {
            Region::Ppp => "+++",
            Region::Ppm => "++-",
            Region::Pmm => "+--",
            Region::Mmm => "---",
            Region::Ppz => "++0",
            Region::Pzm => "+0-",
            Region::Zmm => "0--",
            Region::Pzz => "+00",
            Region::Zzm => "00-",
            Region::Zzz => "000",
        }
    }

    fn signs(self) -> [i8; 3] {
        let mut s = [0i8; 3];
        for (i, c) in self.code().bytes().enumerate() {
            s[i] = match c {
                b'+' => 1,
                b'-' => -1,
                _ => 0,
            };
        }
        s
    }

    /// Pattern for best bid in bin `bb` and best ask in bin `ba` (bins 0..5,
    /// reservoirs in 0 and 4).
    pub fn from_best_bins(bb: usize, ba: usize) -> Option<Region> {
        if !(bb < ba && ba <= 4) {
            return None;
        }
        let mut s = [0i8; 3];
        for (i, v) in s.iter_mut().enumerate() {
            let bin = i + 1;
            *v = if bin <= bb {
                1
            } else if bin >= ba {
                -1
            } else {
                0
            };
        }
        Region::ALL.into_iter().find(|r| r.signs() == s)
    }

    /// Bins of the best bid and best ask.
    pub fn best_bins(self) -> (usize, usize) {
        let s = self.signs();
        let bb = (0..3).rev().find(|&i| s[i] > 0).map_or(0, |i| i + 1);
        let ba = (0..3).find(|&i| s[i] < 0).map_or(4, |i| i + 1);
        (bb, ba)
    }

    /// Pattern of a state of the middle bins.
    pub fn of_state(x: [i64; 3]) -> Region {
        let bb = (0..3).rev().find(|&i| x[i] > 0).map_or(0, |i| i + 1);
        let ba = (0..3).find(|&i| x[i] < 0).map_or(4, |i| i + 1);
        Region::from_best_bins(bb, ba).expect("bids sit left of asks")
    }

    /// `self` agrees with `normal` at every nonzero place of `normal`.
    pub fn compatible_with(self, normal: Region) -> bool {
        let (a, b) = (self.signs(), normal.signs());
        (0..3).all(|i| b[i] == 0 || a[i] == b[i])
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Region {
    type Err = LyapunovError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('−', "-");
        Region::ALL.into_iter().find(|r| r.code() == s).ok_or_else(|| LyapunovError::Domain(format!("unknown region {s:?}")))
    }
}

/// `c0 + c1·ε` with exact coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Affine {
    pub c0: Q,
    pub c1: Q,
}

impl Affine {
    pub fn new(c0: Q, c1: Q) -> Self {
        Self { c0, c1 }
    }

    pub fn constant(c0: Q) -> Self {
        Self { c0, c1: Q::zero() }
    }

    pub fn zero() -> Self {
        Self::constant(Q::zero())
    }

    pub fn eval(&self, eps: Q) -> Q {
        self.c0 + self.c1 * eps
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.c0.is_zero(), self.c1.is_zero()) {
            (_, true) => write!(f, "{}", self.c0),
            (true, false) => write!(f, "{}·ε", self.c1),
            (false, false) if self.c1.is_negative() => write!(f, "{} − {}·ε", self.c0, -self.c1),
            _ => write!(f, "{} + {}·ε", self.c0, self.c1),
        }
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(self, o: Affine) -> Affine {
        Affine::new(self.c0 + o.c0, self.c1 + o.c1)
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(self, o: Affine) -> Affine {
        Affine::new(self.c0 - o.c0, self.c1 - o.c1)
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        Affine::new(-self.c0, -self.c1)
    }
}

impl Mul<Q> for Affine {
    type Output = Affine;
    fn mul(self, k: Q) -> Affine {
        Affine::new(self.c0 * k, self.c1 * k)
    }
}

pub type DriftVec = [Affine; 3];
pub type Normal = [Q; 3];

/// Drift per region, in arrivals per unit time with bids and asks each at rate 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftTable {
    entries: Vec<(Region, DriftVec)>,
}

impl DriftTable {
    pub fn new(entries: Vec<(Region, DriftVec)>) -> Self {
        Self { entries }
    }

    /// The table as printed.
    pub fn printed() -> Self {
        let a = |c0: (i64, i64), c1: i64| Affine::new(q(c0.0, c0.1), qi(c1));
        let z = Affine::zero();
        Self::new(vec![
            (Region::Ppp, [a((1, 5), -1), a((1, 5), 0), a((-4, 5), 1)]),
            (Region::Mmm, [a((4, 5), -1), a((-1, 5), 0), a((-1, 5), 1)]),
            (Region::Ppm, [a((1, 5), -1), a((-3, 5), 0), a((2, 5), -1)]),
            (Region::Pmm, [a((-2, 5), 1), a((3, 5), 0), a((-1, 5), 1)]),
            (Region::Ppz, [a((1, 5), -1), a((-3, 5), 0), z]),
            (Region::Zmm, [z, a((3, 5), 0), a((-1, 5), 1)]),
            (Region::Pzm, [a((-2, 5), 1), z, a((2, 5), -1)]),
            (Region::Pzz, [a((-2, 5), 1), z, z]),
            (Region::Zzm, [z, z, a((2, 5), -1)]),
        ])
    }

    pub fn get(&self, r: Region) -> Option<&DriftVec> {
        self.entries.iter().find(|(k, _)| *k == r).map(|(_, v)| v)
    }

    pub fn entries(&self) -> &[(Region, DriftVec)] {
        &self.entries
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalTable {
    entries: Vec<(Region, Normal)>,
}

impl NormalTable {
    pub fn new(entries: Vec<(Region, Normal)>) -> Self {
        Self { entries }
    }

    pub fn printed() -> Self {
        let v = |a: (i64, i64), b: (i64, i64), c: (i64, i64)| [q(a.0, a.1), q(b.0, b.1), q(c.0, c.1)];
        let plus_zero = v((4, 3), (1, 1), (2, 3));
        let zero_minus = v((-2, 1), (-3, 1), (-4, 1));
        Self::new(vec![
            (Region::Ppp, v((1, 1), (1, 1), (1, 1))),
            (Region::Ppm, v((1, 1), (1, 1), (-1, 1))),
            (Region::Pmm, v((1, 1), (-1, 1), (-1, 1))),
            (Region::Mmm, v((-1, 1), (-1, 1), (-1, 1))),
            (Region::Ppz, plus_zero),
            (Region::Pzz, plus_zero),
            (Region::Pzm, v((1, 1), (-4, 5), (-9, 5))),
            (Region::Zmm, zero_minus),
            (Region::Zzm, zero_minus),
        ])
    }

    pub fn get(&self, r: Region) -> Option<&Normal> {
        self.entries.iter().find(|(k, _)| *k == r).map(|(_, v)| v)
    }

    pub fn set(&mut self, r: Region, v: Normal) {
        match self.entries.iter_mut().find(|(k, _)| *k == r) {
            Some(e) => e.1 = v,
            None => self.entries.push((r, v)),
        }
    }

    pub fn entries(&self) -> &[(Region, Normal)] {
        &self.entries
    }
}

fn dot_affine(d: &DriftVec, v: &Normal) -> Affine {
    (0..3).fold(Affine::zero(), |acc, i| acc + d[i] * v[i])
}

fn compatible_product(drifts: &DriftTable, normals: &NormalTable, drift: Region, normal: Region) -> Result<Affine, LyapunovError> {
    if normal == Region::Zzz || drift == Region::Zzz {
        return Err(LyapunovError::Domain("region 000 carries no drift or normal".into()));
    }
    if !drift.compatible_with(normal) {
        return Err(LyapunovError::Domain(format!("{drift} does not agree with {normal} at its nonzero places")));
    }
    let d = drifts.get(drift).ok_or_else(|| LyapunovError::Domain(format!("no drift for {drift}")))?;
    let v = normals.get(normal).ok_or_else(|| LyapunovError::Domain(format!("no normal for {normal}")))?;
    Ok(dot_affine(d, v))
}

/// `⟨Δ_drift, v_normal⟩` at `eps`, using the printed tables.
pub fn drift_dot(drift: Region, normal: Region, eps: Q) -> Result<Q, LyapunovError> {
    Ok(compatible_product(&DriftTable::printed(), &NormalTable::printed(), drift, normal)?.eval(eps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairValue {
    pub drift: Region,
    pub normal: Region,
    pub product: Affine,
    pub at_zero: Q,
    pub at_eps_max: Q,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub eps_max: Q,
    pub pairs: Vec<PairValue>,
    /// Supremum of the ε in `[0, 1/5)` at which every product is negative; zero
    /// if some product is nonnegative at ε = 0.
    pub admissible_sup: Q,
    pub passed: bool,
    /// First nonnegative product, as `(drift, normal, value)`.
    pub offending: Option<(Region, Region, Q)>,
}

impl Certificate {
    /// The largest value over all pairs and both endpoints.
    pub fn worst(&self) -> Option<&PairValue> {
        self.pairs.iter().max_by(|a, b| a.at_zero.max(a.at_eps_max).cmp(&b.at_zero.max(b.at_eps_max)))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<5} {:<5} {:>12} {:>12}\n", "drift", "normal", "eps=0", format!("eps={}", self.eps_max));
        for p in &self.pairs {
            s.push_str(&format!("{:<5} {:<5} {:>12} {:>12}\n", p.drift.code(), p.normal.code(), p.at_zero.to_string(), p.at_eps_max.to_string()));
        }
        s.push_str(&format!("admissible eps < {}\n", self.admissible_sup));
        match &self.offending {
            None => s.push_str("PASS\n"),
            Some((d, n, v)) => s.push_str(&format!("FAILED at ({d}, {n}) = {v}\n")),
        }
        s
    }
}

/// Checks every compatible pair at ε = 0 and ε = `eps_max`. Products are affine
/// in ε, so negativity at both ends covers the whole interval.
pub fn certify_with(drifts: &DriftTable, normals: &NormalTable, eps_max: Q) -> Result<Certificate, LyapunovError> {
    if eps_max.is_negative() || eps_max >= q(1, 5) {
        return Err(LyapunovError::Domain(format!("eps_max = {eps_max} outside [0, 1/5)")));
    }
    let mut pairs = Vec::new();
    let mut sup = q(1, 5);
    let mut offending = None;
    for &normal in &Region::ACTIVE {
        for &drift in &Region::ACTIVE {
            if !drift.compatible_with(normal) {
                continue;
            }
            let p = compatible_product(drifts, normals, drift, normal)?;
            let (z, e) = (p.eval(Q::zero()), p.eval(eps_max));
            if offending.is_none() && (z >= Q::zero() || e >= Q::zero()) {
                offending = Some((drift, normal, if z >= Q::zero() { z } else { e }));
            }
            if z >= Q::zero() {
                sup = Q::zero();
            } else if p.c1 > Q::zero() {
                sup = sup.min(-p.c0 / p.c1);
            }
            pairs.push(PairValue { drift, normal, product: p, at_zero: z, at_eps_max: e });
        }
    }
    Ok(Certificate { eps_max, pairs, admissible_sup: sup, passed: offending.is_none(), offending })
}

pub fn certify_drift(eps_max: Q) -> Result<Certificate, LyapunovError> {
    certify_with(&DriftTable::printed(), &NormalTable::printed(), eps_max)
}

/// `min ⟨x, v_F⟩` over the seven printed normals.
pub fn lyapunov_value(x: [i64; 3]) -> Q {
    lyapunov_value_q([qi(x[0]), qi(x[1]), qi(x[2])])
}

pub fn lyapunov_value_q(x: [Q; 3]) -> Q {
    forms(x).min().expect("seven normals")
}

/// `max ⟨x, v_F⟩` over the same normals. Reported next to the printed min
/// form because the drawn level set is the unit level of this one.
pub fn lyapunov_max_q(x: [Q; 3]) -> Q {
    forms(x).max().expect("seven normals")
}

fn forms(x: [Q; 3]) -> impl Iterator<Item = Q> {
    let n = NormalTable::printed();
    Region::LYAPUNOV.into_iter().map(move |r| {
        let v = n.get(r).expect("printed normal");
        x[0] * v[0] + x[1] * v[1] + x[2] * v[2]
    })
}

/// Same as [`lyapunov_value`] in floating point, for simulation loops.
pub fn lyapunov_value_f64(x: [i64; 3]) -> f64 {
    let v = lyapunov_value(x);
    *v.numer() as f64 / *v.denom() as f64
}

/// Largest ℓ1 norm among the seven normals, which bounds a unit jump of ℒ.
pub fn lipschitz_constant() -> Q {
    let n = NormalTable::printed();
    Region::LYAPUNOV.iter().map(|r| n.get(*r).unwrap().iter().map(|c| c.abs()).sum::<Q>()).max().unwrap()
}

/// Vertices and faces of the level set `ℒ = 1` as printed; faces are 1-based.
pub struct LevelSetFixture {
    pub vertices: Vec<[Q; 3]>,
    pub faces: Vec<Vec<usize>>,
}

impl LevelSetFixture {
    pub fn printed() -> Self {
        let v = |a: (i64, i64), b: (i64, i64), c: (i64, i64)| [q(a.0, a.1), q(b.0, b.1), q(c.0, c.1)];
        Self {
            vertices: vec![
                v((0, 1), (0, 1), (0, 1)),
                v((0, 1), (1, 1), (0, 1)),
                v((0, 1), (0, 1), (1, 1)),
                v((1, 2), (0, 1), (1, 2)),
                v((45, 58), (2, 29), (-9, 58)),
                v((6, 7), (-1, 7), (0, 1)),
                v((29, 34), (-2, 17), (-1, 34)),
                v((3, 4), (0, 1), (0, 1)),
                v((11, 50), (6, 25), (-27, 50)),
                v((0, 1), (3, 7), (-4, 7)),
                v((11, 26), (-6, 13), (-3, 26)),
                v((2, 5), (-3, 5), (0, 1)),
                v((0, 1), (-1, 3), (0, 1)),
                v((-1, 2), (0, 1), (0, 1)),
                v((0, 1), (0, 1), (-1, 4)),
            ],
            faces: vec![
                vec![4, 3, 2],
                vec![5, 2, 10, 9],
                vec![7, 6, 12, 11],
                vec![1, 3, 4, 8],
                vec![1, 8, 6, 12, 14],
                vec![1, 3, 2, 10, 15],
                vec![1, 15, 14],
                vec![7, 5, 9, 11],
                vec![2, 4, 8, 6, 7, 5],
                vec![9, 10, 15, 14, 12, 11],
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexRow {
    /// 1-based vertex number.
    pub vertex: usize,
    pub normal: String,
    pub value: String,
    pub attains_one: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceReport {
    pub face: usize,
    pub vertices: Vec<usize>,
    /// Normals, among all nine, equal to 1 at every vertex of the face.
    pub supporting: Vec<Region>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub rows: Vec<VertexRow>,
    /// `ℒ` at each vertex.
    pub values: Vec<Q>,
    /// The max form at each vertex.
    pub max_values: Vec<Q>,
    pub faces: Vec<FaceReport>,
    pub discrepancies: Vec<String>,
}

/// Evaluates every normal at every printed vertex and matches faces to the
/// normals that support them. Mismatches are listed, not treated as errors.
pub fn verify_level_fixture() -> LevelReport {
    let fx = LevelSetFixture::printed();
    let normals = NormalTable::printed();
    let one = qi(1);
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut max_values = Vec::new();
    let mut discrepancies = Vec::new();
    let eval = |x: &[Q; 3], v: &Normal| x[0] * v[0] + x[1] * v[1] + x[2] * v[2];
    for (i, x) in fx.vertices.iter().enumerate() {
        for (r, v) in normals.entries() {
            let val = eval(x, v);
            rows.push(VertexRow { vertex: i + 1, normal: r.code().into(), value: val.to_string(), attains_one: val == one });
        }
        let l = lyapunov_value_q(*x);
        if l != one {
            discrepancies.push(format!("vertex {} has L = {l}", i + 1));
        }
        values.push(l);
        max_values.push(lyapunov_max_q(*x));
    }
    let faces = fx
        .faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let supporting: Vec<Region> =
                normals.entries().iter().filter(|(_, v)| f.iter().all(|&k| eval(&fx.vertices[k - 1], v) == one)).map(|(r, _)| *r).collect();
            if supporting.is_empty() {
                discrepancies.push(format!("face {} has no normal equal to 1 on all its vertices", fi + 1));
            }
            FaceReport { face: fi + 1, vertices: f.clone(), supporting }
        })
        .collect();
    LevelReport { rows, values, max_values, faces, discrepancies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn region_codes_round_trip() {
        for r in Region::ALL {
            assert_eq!(r.code().parse::<Region>().unwrap(), r);
            let (bb, ba) = r.best_bins();
            assert_eq!(Region::from_best_bins(bb, ba), Some(r));
        }
        assert_eq!("++−".parse::<Region>().unwrap(), Region::Ppm);
        assert!("-+-".parse::<Region>().is_err());
        assert_eq!(Region::of_state([0, 2, 5]), Region::Ppp);
        assert_eq!(Region::of_state([3, 0, -1]), Region::Pzm);
        assert_eq!(Region::of_state([0, 0, 0]), Region::Zzz);
    }

    #[test]
    fn compatibility() {
        assert!(Region::Ppp.compatible_with(Region::Ppz));
        assert!(Region::Ppm.compatible_with(Region::Ppz));
        assert!(!Region::Pzm.compatible_with(Region::Ppz));
        assert!(Region::Ppp.compatible_with(Region::Ppp));
        assert!(!Region::Ppm.compatible_with(Region::Ppp));
    }

    #[test]
    fn printed_entries() {
        let d = DriftTable::printed();
        let e = q(1, 100);
        let ppp = d.get(Region::Ppp).unwrap();
        assert_eq!(ppp.map(|a| a.eval(e)), [q(1, 5) - e, q(1, 5), -(q(4, 5) - e)]);
        let n = NormalTable::printed();
        assert_eq!(n.get(Region::Pzm).unwrap(), &[qi(1), q(-4, 5), q(-9, 5)]);
        assert_eq!(n.get(Region::Ppz), n.get(Region::Pzz));
        assert_eq!(n.get(Region::Zmm), n.get(Region::Zzm));
    }

    #[test]
    fn dot_examples() {
        assert_eq!(drift_dot(Region::Ppp, Region::Ppp, qi(0)).unwrap(), q(-2, 5));
        assert_eq!(drift_dot(Region::Ppm, Region::Ppm, qi(0)).unwrap(), q(-4, 5));
        // ε terms cancel
        assert_eq!(drift_dot(Region::Ppm, Region::Ppm, q(1, 10)).unwrap(), q(-4, 5));
        assert_eq!(drift_dot(Region::Ppp, Region::Ppz, qi(0)).unwrap(), q(-1, 15));
        assert!(matches!(drift_dot(Region::Pzm, Region::Ppz, qi(0)), Err(LyapunovError::Domain(_))));
        assert!(drift_dot(Region::Zzz, Region::Ppp, qi(0)).is_err());
    }

    #[test]
    fn certificate_on_printed_tables() {
        let c = certify_drift(qi(0)).unwrap();
        assert!(c.passed);
        assert_eq!(c.worst().unwrap().at_zero, q(-1, 25));
        assert!(c.admissible_sup > qi(0));
        assert_eq!(c.admissible_sup, q(1, 30));
        assert!(certify_drift(q(1, 100)).unwrap().passed);
        let c = certify_drift(q(1, 20)).unwrap();
        assert!(!c.passed);
        assert_eq!(c.offending, Some((Region::Ppm, Region::Pzm, qi(0))));
        let at = |d, n| c.pairs.iter().find(|p| p.drift == d && p.normal == n).unwrap().at_eps_max;
        assert_eq!(at(Region::Ppm, Region::Zzm), q(1, 10));
        assert!(!certify_drift(q(1, 30)).unwrap().passed);
        assert!(certify_drift(q(1, 31)).unwrap().passed);
        assert!(certify_drift(q(1, 5)).is_err());
        assert!(certify_drift(q(-1, 5)).is_err());
        assert!(c.to_text().contains("FAILED"));
    }

    #[test]
    fn tampered_normals() {
        // a sign flip of v_{+++} breaks the (+++, +++) product
        let mut n = NormalTable::printed();
        n.set(Region::Ppp, [qi(-1), qi(-1), qi(-1)]);
        let c = certify_with(&DriftTable::printed(), &n, qi(0)).unwrap();
        assert_eq!(c.offending, Some((Region::Ppp, Region::Ppp, q(2, 5))));
        // (1, 1, 2) leaves it negative
        n.set(Region::Ppp, [qi(1), qi(1), qi(2)]);
        let c = certify_with(&DriftTable::printed(), &n, qi(0)).unwrap();
        assert!(c.passed);
        assert_eq!(c.pairs.iter().find(|p| p.drift == Region::Ppp && p.normal == Region::Ppp).unwrap().at_zero, q(-6, 5));
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_value([0, 0, 0]), qi(0));
        assert_eq!(lyapunov_value([1, 1, -1]), qi(-1));
        assert_eq!(lipschitz_constant(), qi(9));
    }

    #[test]
    fn level_fixture_values() {
        let r = verify_level_fixture();
        let hit = |v: usize, n: &str| r.rows.iter().any(|row| row.vertex == v && row.normal == n && row.attains_one);
        assert!(hit(2, "+++"));
        assert!(hit(8, "++0"));
        assert!(hit(14, "0--"));
        assert_eq!(r.rows.len(), 15 * 9);
        assert_eq!(r.faces.len(), 10);
        assert!(r.discrepancies.iter().any(|d| d.starts_with("vertex 1 ")));
        // regression pins for the min form
        let positive: Vec<usize> = (0..15).filter(|&i| r.values[i] > qi(0)).map(|i| i + 1).collect();
        assert_eq!(positive, vec![9, 10, 11]);
        // the max form puts every vertex but the origin and vertex 3 on its unit level
        let off: Vec<usize> = (0..15).filter(|&i| r.max_values[i] != qi(1)).map(|i| i + 1).collect();
        assert_eq!(off, vec![1, 3]);
        assert_eq!(r.max_values[2], q(2, 3));
        let supported: Vec<usize> = r.faces.iter().filter(|f| !f.supporting.is_empty()).map(|f| f.face).collect();
        assert_eq!(supported, vec![1, 2, 3, 8, 9, 10]);
    }

    proptest! {
        #[test]
        fn homogeneous(x in prop::array::uniform3(-50i64..50), k in 0i64..6) {
            prop_assert_eq!(lyapunov_value(x.map(|c| c * k)), lyapunov_value(x) * k);
        }

        #[test]
        fn lipschitz(x in prop::array::uniform3(-50i64..50), i in 0usize..3, s in prop::bool::ANY) {
            let mut y = x;
            y[i] += if s { 1 } else { -1 };
            prop_assert!((lyapunov_value(y) - lyapunov_value(x)).abs() <= lipschitz_constant());
        }

        #[test]
        fn region_of_sorted_state(b in 0usize..4, a in 1usize..5, n in 1i64..5) {
            prop_assume!(b < a);
            let mut x = [0i64; 3];
            for (i, v) in x.iter_mut().enumerate() {
                if i + 1 <= b { *v = n } else if i + 1 >= a { *v = -n }
            }
            prop_assert_eq!(Region::of_state(x).best_bins(), (b, a));
        }
    }
}
