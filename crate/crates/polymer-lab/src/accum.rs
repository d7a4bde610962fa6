//! Exact accumulation of f64 samples.
//!
//! Monte Carlo reductions here must satisfy two contracts that ordinary
//! floating-point summation cannot: merging partial estimates is
//! associative and commutative bit-for-bit, and the final numbers do not
//! depend on worker count or scheduling. [`ExactSum`] delivers both by
//! summing in a fixed-point accumulator wide enough to hold any finite
//! f64 exactly (a Kulisch accumulator): integer addition is exact, so
//! every grouping of the same samples produces the same state.
//!
//! Cost is a few shifts and adds per sample, which is noise next to the
//! path simulation that produces the sample.

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Bit 0 of the accumulator represents 2^-1074 (the smallest subnormal).
/// The largest finite f64 tops out at bit 2097; the remaining bits are
/// headroom for 2^63 additions plus sign.
const LIMBS: usize = 34;

/// Exact signed fixed-point sum of f64 values.
///
/// Two's-complement over 34 x 64 bits. Addition of samples and merging of
/// accumulators are both exact, hence associative and commutative with
/// bit-identical results.
#[derive(Clone, PartialEq, Eq)]
pub struct ExactSum {
    limbs: [u64; LIMBS],
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExactSum({})", self.to_f64())
    }
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum { limbs: [0; LIMBS] }
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    /// Adds a finite sample. Panics on NaN or infinity: a non-finite
    /// sample means the statistic upstream is already broken, and a
    /// silently poisoned sum is worse than a crash.
    pub fn add(&mut self, x: f64) {
        assert!(x.is_finite(), "ExactSum::add requires finite input, got {x}");
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7FF) as usize;
        let frac = bits & ((1u64 << 52) - 1);
        // Mantissa and the bit offset of its least-significant bit,
        // relative to 2^-1074.
        let (mant, offset) = if exp == 0 { (frac, 0) } else { (frac | (1u64 << 52), exp - 1) };
        self.add_shifted(mant, offset, negative);
    }

    /// Merges another accumulator into this one. Exact, so the result is
    /// independent of merge order and grouping.
    pub fn merge(&mut self, other: &ExactSum) {
        let mut carry = 0u64;
        for i in 0..LIMBS {
            let (s1, c1) = self.limbs[i].overflowing_add(other.limbs[i]);
            let (s2, c2) = s1.overflowing_add(carry);
            self.limbs[i] = s2;
            carry = (c1 as u64) + (c2 as u64);
        }
    }

    fn add_shifted(&mut self, mant: u64, offset: usize, negative: bool) {
        let limb = offset / 64;
        let s = offset % 64;
        let lo = mant << s;
        let hi = if s == 0 { 0 } else { mant >> (64 - s) };
        if negative {
            self.sub_at(limb, lo);
            self.sub_at(limb + 1, hi);
        } else {
            self.add_at(limb, lo);
            self.add_at(limb + 1, hi);
        }
    }

    // Carry and borrow out of the top limb are discarded: the state is
    // two's complement mod 2^(64*LIMBS), and the headroom keeps any true
    // total far from the wrap point.

    fn add_at(&mut self, mut limb: usize, val: u64) {
        if val == 0 {
            return;
        }
        let (sum, mut carry) = self.limbs[limb].overflowing_add(val);
        self.limbs[limb] = sum;
        while carry {
            limb += 1;
            if limb == LIMBS {
                break;
            }
            let (sum, c) = self.limbs[limb].overflowing_add(1);
            self.limbs[limb] = sum;
            carry = c;
        }
    }

    fn sub_at(&mut self, mut limb: usize, val: u64) {
        if val == 0 {
            return;
        }
        let (diff, mut borrow) = self.limbs[limb].overflowing_sub(val);
        self.limbs[limb] = diff;
        while borrow {
            limb += 1;
            if limb == LIMBS {
                break;
            }
            let (diff, b) = self.limbs[limb].overflowing_sub(1);
            self.limbs[limb] = diff;
            borrow = b;
        }
    }

    fn is_negative(&self) -> bool {
        self.limbs[LIMBS - 1] >> 63 == 1
    }

    fn negated(&self) -> ExactSum {
        let mut out = ExactSum::new();
        let mut carry = 1u64;
        for i in 0..LIMBS {
            let (v, c) = (!self.limbs[i]).overflowing_add(carry);
            out.limbs[i] = v;
            carry = c as u64;
        }
        out
    }

    /// Rounds the exact total to the nearest f64 (ties to even).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.is_negative() {
            return -self.negated().to_f64();
        }
        // Highest set bit position.
        let mut h = 0usize;
        for i in (0..LIMBS).rev() {
            if self.limbs[i] != 0 {
                h = i * 64 + 63 - self.limbs[i].leading_zeros() as usize;
                break;
            }
        }
        if h <= 52 {
            // Whole value fits below bit 53: exact subnormal/small normal.
            let m = self.extract_bits(0, h + 1);
            return m as f64 * pow2(-1074);
        }
        let lo = h - 52;
        let mut m = self.extract_bits(lo, 53);
        let guard = self.bit(lo - 1);
        let sticky = self.any_bits_below(lo - 1);
        let mut e = lo as i64 - 1074;
        if guard && (sticky || m & 1 == 1) {
            m += 1;
            if m == 1u64 << 53 {
                m >>= 1;
                e += 1;
            }
        }
        if e > 1023 - 52 {
            return f64::INFINITY;
        }
        m as f64 * pow2(e as i32)
    }

    fn bit(&self, pos: usize) -> bool {
        (self.limbs[pos / 64] >> (pos % 64)) & 1 == 1
    }

    fn any_bits_below(&self, pos: usize) -> bool {
        let limb = pos / 64;
        let s = pos % 64;
        if s > 0 && self.limbs[limb] & ((1u64 << s) - 1) != 0 {
            return true;
        }
        self.limbs[..limb].iter().any(|&l| l != 0)
    }

    /// Extracts `count <= 53` bits starting at bit `lo`.
    fn extract_bits(&self, lo: usize, count: usize) -> u64 {
        let limb = lo / 64;
        let s = lo % 64;
        let mut v = self.limbs[limb] >> s;
        if s > 0 && limb + 1 < LIMBS {
            v |= self.limbs[limb + 1].checked_shl((64 - s) as u32).unwrap_or(0);
        }
        if count < 64 {
            v &= (1u64 << count) - 1;
        }
        v
    }
}

/// 2^e for e in [-1074, 1023], exact.
pub fn pow2(e: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&e));
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

impl Serialize for ExactSum {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(LIMBS))?;
        for l in &self.limbs {
            seq.serialize_element(l)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ExactSum {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LimbVisitor;
        impl<'de> Visitor<'de> for LimbVisitor {
            type Value = ExactSum;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a sequence of {LIMBS} u64 limbs")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<ExactSum, A::Error> {
                let mut out = ExactSum::new();
                for i in 0..LIMBS {
                    out.limbs[i] = seq
                        .next_element()?
                        .ok_or_else(|| serde::de::Error::invalid_length(i, &self))?;
                }
                Ok(out)
            }
        }
        deserializer.deserialize_seq(LimbVisitor)
    }
}

/// Sample count plus exact first and second power sums.
///
/// The canonical mergeable state behind every moment estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub n: u64,
    pub sum: ExactSum,
    pub sum_sq: ExactSum,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.to_f64() / self.n as f64
    }

    /// Correctly rounded Σx. Exact when the pushes were integers below
    /// 2^53, which is how indicator statistics recover integer counts.
    pub fn total(&self) -> f64 {
        self.sum.to_f64()
    }

    /// Unbiased sample variance, clamped at zero.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        ((self.sum_sq.to_f64() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use proptest::prelude::*;

    fn sum_of(values: &[f64]) -> ExactSum {
        let mut s = ExactSum::new();
        for &v in values {
            s.add(v);
        }
        s
    }

    #[test]
    fn small_integers_sum_exactly() {
        let mut s = ExactSum::new();
        for i in 1..=1000 {
            s.add(i as f64);
        }
        assert_eq!(s.to_f64(), 500_500.0);
    }

    #[test]
    fn cancellation_is_exact() {
        let mut s = ExactSum::new();
        let mut rng = SeedStream::new(11, 0).rng();
        let xs: Vec<f64> = (0..100).map(|_| rng.next_normal() * 1e120).collect();
        for &x in &xs {
            s.add(x);
        }
        for &x in &xs {
            s.add(-x);
        }
        assert_eq!(s.to_f64(), 0.0);
        assert!(s.is_zero());
    }

    #[test]
    fn tiny_term_survives_huge_term() {
        let mut s = ExactSum::new();
        s.add(1e300);
        s.add(1e-300);
        s.add(-1e300);
        assert_eq!(s.to_f64(), 1e-300);
    }

    #[test]
    fn ties_round_to_even() {
        let mut s = ExactSum::new();
        s.add(9007199254740992.0); // 2^53
        s.add(1.0);
        // exact total 2^53 + 1 is a tie between 2^53 and 2^53 + 2
        assert_eq!(s.to_f64(), 9007199254740992.0);
        s.add(2.0);
        s.add(1.0);
        // 2^53 + 4 is exactly representable
        assert_eq!(s.to_f64(), 9007199254740996.0);
    }

    #[test]
    fn subnormal_totals_are_exact() {
        let tiny = f64::from_bits(1); // 2^-1074
        let mut s = ExactSum::new();
        for _ in 0..3 {
            s.add(tiny);
        }
        assert_eq!(s.to_f64(), 3.0 * tiny);
    }

    #[test]
    fn single_values_round_trip() {
        let mut rng = SeedStream::new(3, 3).rng();
        for _ in 0..1000 {
            let x = rng.next_normal() * 10f64.powf(rng.next_f64() * 600.0 - 300.0);
            let mut s = ExactSum::new();
            s.add(x);
            assert_eq!(s.to_f64(), x, "round trip failed for {x:e}");
        }
    }

    #[test]
    fn merge_matches_sequential() {
        let mut rng = SeedStream::new(17, 1).rng();
        let xs: Vec<f64> = (0..500).map(|_| rng.next_normal()).collect();
        let whole = sum_of(&xs);
        let mut left = sum_of(&xs[..123]);
        let right = sum_of(&xs[123..]);
        left.merge(&right);
        assert_eq!(left, whole);
    }

    #[test]
    fn running_moments_of_constants() {
        let mut m = RunningMoments::new();
        for _ in 0..50 {
            m.push(2.5);
        }
        assert_eq!(m.mean(), 2.5);
        assert_eq!(m.variance(), 0.0);
        assert_eq!(m.std_error(), 0.0);
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            raw in proptest::collection::vec((-1.0e12f64..1.0e12, 0u8..4), 3..60),
            split_a in 0usize..60,
            split_b in 0usize..60,
        ) {
            // Scale mantissas across very different magnitudes.
            let xs: Vec<f64> = raw.iter()
                .map(|&(m, band)| m * pow2(-40 + 25 * band as i32))
                .collect();
            let i = split_a.min(xs.len());
            let j = (i + split_b % (xs.len() - i + 1)).min(xs.len());
            let (a, b, c) = (sum_of(&xs[..i]), sum_of(&xs[i..j]), sum_of(&xs[j..]));

            // ((a+b)+c)
            let mut ab = a.clone();
            ab.merge(&b);
            let mut ab_c = ab.clone();
            ab_c.merge(&c);
            // (a+(b+c))
            let mut bc = b.clone();
            bc.merge(&c);
            let mut a_bc = a.clone();
            a_bc.merge(&bc);
            // (c+b)+a
            let mut cb = c.clone();
            cb.merge(&b);
            let mut cba = cb.clone();
            cba.merge(&a);

            prop_assert_eq!(&ab_c, &a_bc);
            prop_assert_eq!(&ab_c, &cba);
            prop_assert_eq!(ab_c, sum_of(&xs));
        }

        #[test]
        fn dyadic_sums_match_integer_oracle(
            ints in proptest::collection::vec(-1_000_000i64..1_000_000, 1..40)
        ) {
            // Values k * 2^-20 sum exactly; oracle in integer arithmetic.
            let mut s = ExactSum::new();
            let mut oracle: i64 = 0;
            for &k in &ints {
                s.add(k as f64 * pow2(-20));
                oracle += k;
            }
            prop_assert_eq!(s.to_f64(), oracle as f64 * pow2(-20));
        }
    }
}
