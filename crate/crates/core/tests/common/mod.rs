//! Shared helpers for the integration tests.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};

/// Working precision of the high-precision oracle (≈ 51 decimal digits).
pub const PREC: usize = 170;
const RM: RoundingMode = RoundingMode::ToEven;

/// Exact conversion of an `f64`.
pub fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PREC)
}

/// Arbitrary-precision scalar for replaying the scheme's arithmetic.
pub struct Hp {
    cc: Consts,
}

impl Hp {
    pub fn new() -> Self {
        Self {
            cc: Consts::new().expect("constants cache"),
        }
    }

    pub fn f(&self, x: f64) -> BigFloat {
        big(x)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, PREC, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, PREC, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, PREC, RM)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, PREC, RM)
    }

    /// `x^p` for `x ≥ 0`, with `0^p = 0`.
    pub fn pow(&mut self, x: &BigFloat, p: &BigFloat) -> BigFloat {
        if x.is_zero() {
            return self.f(0.0);
        }
        x.pow(p, PREC, RM, &mut self.cc)
    }

    pub fn to_f64(&self, x: &BigFloat) -> f64 {
        let s = x.to_string();
        s.parse::<f64>()
            .unwrap_or_else(|_| panic!("cannot parse {s}"))
    }

    /// `|got - exact| / |exact|`, evaluated in high precision.
    pub fn rel_err(&self, got: f64, exact: &BigFloat) -> f64 {
        let diff = self.sub(&self.f(got), exact).abs();
        let rel = self.div(&diff, &exact.abs());
        self.to_f64(&rel)
    }
}

/// Inner expression `y(1-kΔ) + Δ(kl - (aσ²/2)y^{2a-1})` in high precision.
pub fn hp_inner(
    hp: &mut Hp,
    y: &BigFloat,
    dt: f64,
    k: f64,
    l: f64,
    sigma: f64,
    a: f64,
) -> BigFloat {
    let one = hp.f(1.0);
    let two = hp.f(2.0);
    let (dt, k, l, sigma, a) = (hp.f(dt), hp.f(k), hp.f(l), hp.f(sigma), hp.f(a));
    let exponent = hp.sub(&hp.mul(&two, &a), &one);
    let power = hp.pow(y, &exponent);
    let half_a_s2 = hp.div(&hp.mul(&a, &hp.mul(&sigma, &sigma)), &two);
    let decay = hp.mul(y, &hp.sub(&one, &hp.mul(&k, &dt)));
    let drift = hp.sub(&hp.mul(&k, &l), &hp.mul(&half_a_s2, &power));
    hp.add(&decay, &hp.mul(&dt, &drift))
}

/// One semi-discrete step in high precision.
#[allow(clippy::too_many_arguments)]
pub fn hp_step(
    hp: &mut Hp,
    y: &BigFloat,
    dt: f64,
    dw: f64,
    k: f64,
    l: f64,
    sigma: f64,
    a: f64,
) -> BigFloat {
    let inner = hp_inner(hp, y, dt, k, l, sigma, a);
    let one = hp.f(1.0);
    let one_minus_a = hp.sub(&one, &hp.f(a));
    let root = hp.pow(&inner, &one_minus_a);
    let z = hp.add(
        &hp.mul(&hp.mul(&hp.f(sigma), &one_minus_a), &hp.f(dw)),
        &root,
    );
    let inv = hp.div(&one, &one_minus_a);
    hp.pow(&z.abs(), &inv)
}
