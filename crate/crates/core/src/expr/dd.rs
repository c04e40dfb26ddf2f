//! Double-double arithmetic for the evaluator.
//!
//! A [`Dd`] is the unevaluated sum `hi + lo` of two floats with
//! `|lo| ≤ ulp(hi)/2`, carrying roughly 31 significant decimal digits.
//! The evaluator computes in this type because symbolic elimination and
//! bracket differentiation build deeply nested quotients whose plain-double
//! evaluation loses up to ten digits to cancellation in sizable regions of
//! the sample space — enough to cross the rank and span decision thresholds
//! and corrupt votes. Computing the same chains in double-double pushes that
//! error far below every threshold, so no decision logic has to know about
//! it.
//!
//! The primitives are the classical error-free transformations (Knuth
//! two-sum, Dekker/Veltkamp split and product); no FMA hardware is assumed.

use num::BigRational;
use num::ToPrimitive;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Exact sum: `a + b = s + e` with `s = fl(a + b)`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Exact sum assuming `|a| ≥ |b|` (or either is zero).
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Veltkamp split of a double into two 26-bit halves.
#[inline]
fn split(a: f64) -> (f64, f64) {
    const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

/// Exact product: `a * b = p + e` with `p = fl(a * b)`.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ahi, alo) = split(a);
    let (bhi, blo) = split(b);
    let e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    (p, e)
}

impl From<f64> for Dd {
    #[inline]
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    /// Renormalized from an unordered pair.
    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (s, e) = two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.hi == 0.0
    }

    #[inline]
    pub fn neg(self) -> Self {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Self {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (s1, s2) = quick_two_sum(s1, s2 + t2);
        Dd { hi: s1, lo: s2 }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Self {
        self.add(o.neg())
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Self {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + self.hi * o.lo + self.lo * o.hi;
        let (p1, p2) = quick_two_sum(p1, p2);
        Dd { hi: p1, lo: p2 }
    }

    #[inline]
    pub fn mul_f64(self, k: f64) -> Self {
        let (p1, p2) = two_prod(self.hi, k);
        let (p1, p2) = quick_two_sum(p1, p2 + self.lo * k);
        Dd { hi: p1, lo: p2 }
    }

    pub fn div(self, o: Dd) -> Self {
        // Three long-division steps, each removing one double of quotient.
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return Dd::from(q1);
        }
        let mut r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd::new(s, e + q3)
    }

    pub fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Dd::ONE;
        }
        if k < 0 {
            return Dd::ONE.div(self.powi(-k));
        }
        let mut base = self;
        let mut k = k as u32;
        let mut acc = Dd::ONE;
        while k > 1 {
            if k & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            k >>= 1;
        }
        acc.mul(base)
    }

    /// Sine, accurate to double-double precision for arguments below 2^30.
    pub fn sin(self) -> Self {
        let (s, _) = self.sincos();
        s
    }

    /// Cosine, accurate to double-double precision for arguments below 2^30.
    pub fn cos(self) -> Self {
        let (_, c) = self.sincos();
        c
    }

    pub fn tan(self) -> Self {
        let (s, c) = self.sincos();
        s.div(c)
    }

    fn sincos(self) -> (Dd, Dd) {
        // π/2 as a double-double (accurate to ~1e-33).
        const PIO2_HI: f64 = 1.570_796_326_794_896_6;
        const PIO2_LO: f64 = 6.123_233_995_736_766e-17;
        if !self.hi.is_finite() || self.hi.abs() >= 1.073_741_824e9 {
            // Out of exact-reduction range: fall back to double precision
            // with a first-order correction from the low word. Arguments
            // this large never appear in practice (trig only wraps state
            // variables and their short combinations).
            let s = self.hi.sin();
            let c = self.hi.cos();
            return (
                Dd::new(s, c * self.lo),
                Dd::new(c, -s * self.lo),
            );
        }
        let pio2 = Dd {
            hi: PIO2_HI,
            lo: PIO2_LO,
        };
        let k = (self.hi / PIO2_HI).round();
        let r = self.sub(pio2.mul_f64(k));
        let (sr, cr) = sincos_taylor(r);
        match (k as i64).rem_euclid(4) {
            0 => (sr, cr),
            1 => (cr, sr.neg()),
            2 => (sr.neg(), cr.neg()),
            _ => (cr.neg(), sr),
        }
    }
}

/// Inverse factorials 1/0! .. 1/33!, built once in double-double.
fn inv_fact() -> &'static [Dd; 34] {
    static TABLE: OnceLock<[Dd; 34]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [Dd::ONE; 34];
        for i in 1..34 {
            t[i] = t[i - 1].div(Dd::from(i as f64));
        }
        t
    })
}

/// Taylor series for sin and cos on `|r| ≤ π/4 + ε`.
fn sincos_taylor(r: Dd) -> (Dd, Dd) {
    let table = inv_fact();
    let r2 = r.mul(r);
    // sin(r) = Σ (−1)^i r^(2i+1) / (2i+1)!,  cos(r) = Σ (−1)^i r^(2i) / (2i)!
    let mut sin_acc = Dd::ZERO;
    let mut cos_acc = Dd::ZERO;
    let mut odd_pow = r; // r^(2i+1)
    let mut even_pow = Dd::ONE; // r^(2i)
    for i in 0..16 {
        let st = odd_pow.mul(table[2 * i + 1]);
        let ct = even_pow.mul(table[2 * i]);
        if i % 2 == 0 {
            sin_acc = sin_acc.add(st);
            cos_acc = cos_acc.add(ct);
        } else {
            sin_acc = sin_acc.sub(st);
            cos_acc = cos_acc.sub(ct);
        }
        if st.hi.abs() < 1e-35 && ct.hi.abs() < 1e-35 {
            break;
        }
        odd_pow = odd_pow.mul(r2);
        even_pow = even_pow.mul(r2);
    }
    (sin_acc, cos_acc)
}

/// A rational as a double-double: the correctly rounded double plus the
/// rounded remainder, renormalized.
pub fn dd_from_rational(r: &BigRational) -> Option<Dd> {
    let hi = r.to_f64()?;
    if !hi.is_finite() {
        return None;
    }
    let exact_hi = BigRational::from_float(hi)?;
    let lo = (r - exact_hi).to_f64()?;
    Some(Dd::new(hi, lo))
}
