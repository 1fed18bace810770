//! Standard normal distribution: density, CDF via `erfc`, and its inverse.

#![allow(clippy::excessive_precision)]

use crate::lattice_qmc::LatticeError;
use crate::scalar::Real;

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::FRAC_2_SQRT_PI() * T::FRAC_1_SQRT_2() * T::lit(0.5);
    inv_sqrt_2pi * (-(x * x) * T::lit(0.5)).exp()
}

/// Complementary error function.
///
/// Positive-term series `erf(x) = 2/√π e^{-x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!`
/// below 0.75, Lentz continued fraction above. Relative accuracy is a few ulp
/// in `f64` across the range.
pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return T::lit(2.0) - erfc(-x);
    }
    if x < T::lit(0.75) {
        T::one() - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = T::one();
    for _ in 0..200 {
        k = k + T::lit(2.0);
        term = term * (x2 + x2) / k;
        sum = sum + term;
        if term <= sum * T::epsilon() * T::lit(0.25) {
            break;
        }
    }
    T::FRAC_2_SQRT_PI() * (-x2).exp() * sum
}

/// `erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`.
fn erfc_continued_fraction<T: Real>(x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let half = T::lit(0.5);
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    let mut k = T::zero();
    for _ in 0..2000 {
        k = k + half;
        d = x + k * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + k / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-(x * x)).exp() / (f * T::PI().sqrt())
}

/// Standard normal CDF `Φ(x) = erfc(-x/√2)/2`.
#[inline]
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5) * erfc(-x * T::FRAC_1_SQRT_2())
}

/// Clamps a unit-interval coordinate to `[ε, 1 − ε]` (ε the machine epsilon,
/// `2⁻⁵²` for `f64`) so that `Φ⁻¹` stays finite on lattice points at the
/// origin. Values outside `[0, 1]` are returned unchanged.
#[inline]
pub fn clamp_unit<T: Real>(u: T) -> T {
    let lo = T::epsilon();
    let hi = T::one() - T::epsilon();
    if u >= T::zero() && u < lo {
        lo
    } else if u <= T::one() && u > hi {
        hi
    } else {
        u
    }
}

// Wichura, AS241 (PPND16).
const A: [f64; 8] = [
    3.387_132_872_796_366_608_0e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083_0e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061_0e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561_0e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_90e0,
    5.769_497_221_460_691_405_50e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_70e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_40e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_40e0,
    6.897_673_349_851_000_045_50e-1,
    1.481_039_764_274_800_745_90e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946_00e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_20e0,
    5.463_784_911_164_114_369_90e0,
    1.784_826_539_917_291_335_80e0,
    2.965_605_718_285_048_912_30e-1,
    2.653_218_952_657_612_309_30e-2,
    1.242_660_947_388_078_438_60e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_90e-1,
    1.369_298_809_227_358_053_10e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591_00e-4,
    1.846_318_317_510_054_681_80e-5,
    1.421_511_758_316_445_888_70e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn horner<T: Real>(coeffs: &[f64; 8], r: T) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * r + T::lit(c))
}

/// Rational minimax approximation of `Φ⁻¹` for `u` in `(0, 1/2]`.
fn ppnd_lower<T: Real>(u: T) -> T {
    let q = u - T::lit(0.5);
    if q.abs() <= T::lit(0.425) {
        let r = T::lit(0.180625) - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let mut r = (-u.ln()).sqrt();
    let z = if r <= T::lit(5.0) {
        r = r - T::lit(1.6);
        horner(&C, r) / horner(&D, r)
    } else {
        r = r - T::lit(5.0);
        horner(&E, r) / horner(&F, r)
    };
    -z
}

/// Inverse standard normal CDF.
///
/// Inputs in `[0, 1]` are clamped with [`clamp_unit`] first; anything else
/// (including NaN) is a domain error. The AS241 estimate is refined by one
/// Newton step against [`normal_cdf`], evaluated on the lower half so the
/// tail probability is represented exactly.
pub fn inverse_normal_cdf<T: Real>(u: T) -> Result<T, LatticeError> {
    let u = clamp_unit(u);
    if !(u > T::zero() && u < T::one()) {
        return Err(LatticeError::Domain {
            value: u.to_f64_lossy(),
        });
    }
    let half = T::lit(0.5);
    if u == half {
        return Ok(T::zero());
    }
    let (p, sign) = if u > half {
        (T::one() - u, -T::one())
    } else {
        (u, T::one())
    };
    let mut x = ppnd_lower(p);
    let pdf = normal_pdf(x);
    if pdf > T::zero() {
        x = x - (normal_cdf(x) - p) / pdf;
    }
    Ok(sign * x)
}
