//! The server-assisted instantiation of JRR.
//!
//! Each pair receives opposite signs `R` from a helper. Each member then draws
//! a private `C` from a four-point distribution and reports truthfully iff
//! `C + R > 0`. For `rho <= 0` the induced truthfulness pair has exactly the
//! JRR joint table.

use rand::Rng;
use serde::Serialize;

use super::PerturbParams;
use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

/// One of the four half-integer values `C` can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CValue {
    PlusThreeHalves,
    PlusHalf,
    MinusHalf,
    MinusThreeHalves,
}

impl CValue {
    pub const ALL: [CValue; 4] = [
        CValue::PlusThreeHalves,
        CValue::PlusHalf,
        CValue::MinusHalf,
        CValue::MinusThreeHalves,
    ];

    /// Twice the value, so sums with a sign stay in integers.
    pub fn doubled(self) -> i8 {
        match self {
            CValue::PlusThreeHalves => 3,
            CValue::PlusHalf => 1,
            CValue::MinusHalf => -1,
            CValue::MinusThreeHalves => -3,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.doubled()) / 2.0
    }
}

/// A helper-assigned sign `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Sign {
        if rng.gen::<bool>() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Distribution of `C`, in the order `1.5, 0.5, -0.5, -1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub c_probs: [f64; 4],
    /// `sqrt(-rho p q)`.
    pub s: f64,
}

impl SamplerConfig {
    pub fn new(params: &PerturbParams) -> Result<Self> {
        if params.k() != 2 {
            return Err(invalid("the C/R sampler is defined for binary values only"));
        }
        let (p, q, rho) = (params.p(), params.q(), params.rho());
        if rho > 0.0 {
            return Err(Error::SamplerInfeasible { p, rho });
        }
        let s = (-rho * p * q).sqrt();
        if p - s < -PROB_TOL || q - s < -PROB_TOL {
            return Err(Error::SamplerInfeasible { p, rho });
        }
        Ok(SamplerConfig {
            c_probs: [p - s, s, s, q - s],
            s,
        })
    }

    pub fn probability(&self, c: CValue) -> f64 {
        match c {
            CValue::PlusThreeHalves => self.c_probs[0],
            CValue::PlusHalf => self.c_probs[1],
            CValue::MinusHalf => self.c_probs[2],
            CValue::MinusThreeHalves => self.c_probs[3],
        }
    }

    /// Inverse-CDF draw of `C` from a uniform in `[0, 1)`.
    #[inline]
    pub fn c_from_uniform(&self, u: f64) -> CValue {
        let [a, b, c, _] = self.c_probs;
        if u < a {
            CValue::PlusThreeHalves
        } else if u < a + b {
            CValue::PlusHalf
        } else if u < a + b + c {
            CValue::MinusHalf
        } else {
            CValue::MinusThreeHalves
        }
    }

    pub fn draw_c<R: Rng + ?Sized>(&self, rng: &mut R) -> CValue {
        self.c_from_uniform(rng.gen::<f64>())
    }
}

/// Truthful iff `c + r > 0`; a half-integer plus an integer is never zero.
#[inline]
pub fn sampler_decide(c: CValue, r: Sign) -> bool {
    c.doubled() + 2 * r.value() > 0
}
