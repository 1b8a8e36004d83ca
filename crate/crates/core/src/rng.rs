//! Counter-based random numbers.
//!
//! A draw is a pure function of `(seed, index, field)`: there is no
//! generator state to advance. Two books fed from the same key therefore see
//! bit-identical arrival reals, and any single event can be regenerated
//! without replaying the ones before it.
//!
//! The mixing function is the SplitMix64 finalizer applied in a short chain.
//! Not suitable for anything security related.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline(always)]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which quantity of an event a draw feeds.
///
/// Distinct fields of the same event are independent streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Side,
    Price,
    Gap,
    /// Auxiliary draws, e.g. rejection attempts in the maximal coupling.
    Aux(u32),
}

impl Field {
    fn code(self) -> u64 {
        match self {
            Field::Side => 1,
            Field::Price => 2,
            Field::Gap => 3,
            Field::Aux(k) => 0x100 + u64::from(k),
        }
    }
}

/// Keyed counter-based generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix(seed) }
    }

    /// Independent child generator, e.g. one per replica or per coupled process.
    pub fn split(&self, stream: u64) -> Self {
        Self {
            key: splitmix(self.key ^ splitmix(stream.wrapping_mul(GOLDEN) ^ 0xA5A5_A5A5)),
        }
    }

    #[inline]
    pub fn u64_at(&self, index: u64, field: Field) -> u64 {
        let a = splitmix(self.key ^ index);
        splitmix(a ^ field.code().wrapping_mul(GOLDEN))
    }

    /// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform_at(&self, index: u64, field: Field) -> f64 {
        let bits = self.u64_at(index, field) >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential draw with the given mean.
    #[inline]
    pub fn exp_at(&self, index: u64, field: Field, mean: f64) -> f64 {
        -mean * self.uniform_at(index, field).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_pure_functions_of_the_key() {
        let a = CounterRng::new(7);
        let b = CounterRng::new(7);
        for i in 0..100 {
            assert_eq!(a.u64_at(i, Field::Price), b.u64_at(i, Field::Price));
        }
        assert_ne!(a.u64_at(3, Field::Price), a.u64_at(3, Field::Side));
        assert_ne!(a.u64_at(3, Field::Price), CounterRng::new(8).u64_at(3, Field::Price));
        assert_ne!(a.split(1).u64_at(0, Field::Side), a.split(2).u64_at(0, Field::Side));
    }

    #[test]
    fn uniform_moments() {
        let rng = CounterRng::new(42);
        let n = 200_000u64;
        let (mut s, mut s2, mut cross) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let u = rng.uniform_at(i, Field::Price);
            let v = rng.uniform_at(i, Field::Side);
            assert!(u > 0.0 && u < 1.0);
            s += u;
            s2 += u * u;
            cross += (u - 0.5) * (v - 0.5);
        }
        let nf = n as f64;
        let mean = s / nf;
        let var = s2 / nf - mean * mean;
        // 5 sigma bands for mean, variance and the cross-field covariance
        assert!((mean - 0.5).abs() < 5.0 * (1.0f64 / 12.0 / nf).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 5.0 * (1.0f64 / 180.0 / nf).sqrt());
        assert!((cross / nf).abs() < 5.0 * (1.0 / 144.0 / nf).sqrt());
    }

    #[test]
    fn exponential_mean() {
        let rng = CounterRng::new(3);
        let n = 100_000u64;
        let m: f64 = (0..n).map(|i| rng.exp_at(i, Field::Gap, 0.5)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt());
    }
}
