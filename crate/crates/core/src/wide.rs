//! Nonnegative floats with a 64-bit binary exponent.
//!
//! Products of many Boltzmann factors leave the `f64` range long before they
//! stop mattering for extraction. `Wide` keeps an `f64` mantissa in `[1, 2)`
//! and a separate exponent, so products never underflow to zero. Inside the
//! normal `f64` range every operation rounds exactly like plain `f64`.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign};

use crate::error::{Error, FaultKind, Result};

const EXP_MASK: u64 = 0x7ff << 52;
const BIAS: i64 = 1023;

#[inline]
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + BIAS) as u64) << 52)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Wide {
    m: f64,
    e: i64,
}

impl Wide {
    pub const ZERO: Wide = Wide { m: 0.0, e: 0 };
    pub const ONE: Wide = Wide { m: 1.0, e: 0 };

    #[inline]
    fn new(m: f64, e: i64) -> Wide {
        debug_assert!(m.is_finite() && m >= 0.0);
        if m == 0.0 {
            return Wide::ZERO;
        }
        let bits = m.to_bits();
        let be = ((bits & EXP_MASK) >> 52) as i64;
        if be == 0 {
            return Wide::new(m * pow2(64), e - 64);
        }
        Wide {
            m: f64::from_bits((bits & !EXP_MASK) | ((BIAS as u64) << 52)),
            e: e + be - BIAS,
        }
    }

    pub fn from_f64(x: f64) -> Wide {
        Wide::new(x, 0)
    }

    /// `e^x` without underflow for any finite `x <= 0`.
    pub fn exp(x: f64) -> Wide {
        if x >= -700.0 {
            return Wide::from_f64(x.exp());
        }
        let e = (x / std::f64::consts::LN_2).floor();
        let r = x - e * std::f64::consts::LN_2;
        Wide::new(r.exp(), e as i64)
    }

    pub fn is_zero(self) -> bool {
        self.m == 0.0
    }

    /// Nearest `f64`; saturates to infinity and flushes to zero.
    pub fn to_f64(self) -> f64 {
        if self.m == 0.0 {
            0.0
        } else if self.e > 1023 {
            f64::INFINITY
        } else if self.e >= -1022 {
            self.m * pow2(self.e)
        } else if self.e >= -1086 {
            self.m * pow2(self.e + 64) * pow2(-64)
        } else {
            0.0
        }
    }
}

impl Mul for Wide {
    type Output = Wide;

    #[inline]
    fn mul(self, o: Wide) -> Wide {
        if self.m == 0.0 || o.m == 0.0 {
            return Wide::ZERO;
        }
        Wide::new(self.m * o.m, self.e + o.e)
    }
}

impl MulAssign for Wide {
    #[inline]
    fn mul_assign(&mut self, o: Wide) {
        *self = *self * o;
    }
}

impl Div for Wide {
    type Output = Wide;

    #[inline]
    fn div(self, o: Wide) -> Wide {
        debug_assert!(o.m != 0.0);
        if self.m == 0.0 {
            return Wide::ZERO;
        }
        Wide::new(self.m / o.m, self.e - o.e)
    }
}

impl Add for Wide {
    type Output = Wide;

    #[inline]
    fn add(self, o: Wide) -> Wide {
        if o.m == 0.0 {
            return self;
        }
        if self.m == 0.0 {
            return o;
        }
        let (hi, lo) = if self.e >= o.e { (self, o) } else { (o, self) };
        let gap = hi.e - lo.e;
        if gap > 60 {
            return hi;
        }
        Wide::new(hi.m + lo.m * pow2(-gap), hi.e)
    }
}

impl AddAssign for Wide {
    #[inline]
    fn add_assign(&mut self, o: Wide) {
        *self = *self + o;
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, o: &Wide) -> Option<Ordering> {
        Some(match (self.m == 0.0, o.m == 0.0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.e.cmp(&o.e).then(self.m.total_cmp(&o.m)),
        })
    }
}

/// Divides `v` by its largest entry.
pub(crate) fn normalize_wide(v: &mut [Wide], step: impl FnOnce() -> String) -> Result<()> {
    let max = v
        .iter()
        .copied()
        .fold(Wide::ZERO, |a, b| if b > a { b } else { a });
    if max.is_zero() {
        return Err(Error::NumericFault {
            kind: FaultKind::Underflow,
            step: step(),
        });
    }
    v.iter_mut().for_each(|x| *x = *x / max);
    Ok(())
}

/// Plain `f64` copy of `v`, normalized first when `normalize` is set.
/// Unnormalized vectors that leave the `f64` range fault.
pub(crate) fn finish_wide(
    mut v: Vec<Wide>,
    normalize: bool,
    step: impl Fn() -> String,
) -> Result<Vec<f64>> {
    if normalize {
        normalize_wide(&mut v, &step)?;
    }
    let out: Vec<f64> = v.into_iter().map(Wide::to_f64).collect();
    if out.iter().any(|x| x.is_infinite()) {
        return Err(Error::NumericFault {
            kind: FaultKind::Overflow,
            step: step(),
        });
    }
    if out.iter().all(|&x| x == 0.0) {
        return Err(Error::NumericFault {
            kind: FaultKind::Underflow,
            step: step(),
        });
    }
    Ok(out)
}
