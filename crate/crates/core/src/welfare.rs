//! Welfarist objectives `f`, their derivatives and the scaling function
//! `g(y) = y f'(y)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default exponent standing in for max-min fairness.
pub const MMF_DEFAULT_GAMMA: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WelfareRule {
    /// `f(y) = y`.
    Social,
    /// `f(y) = ln y`.
    Nash,
    /// `f(y) = y^gamma / gamma`, `gamma <= 1`, `gamma != 0`.
    GammaFair(f64),
    /// Max-min fairness, approximated by a negative-exponent gamma-fair objective.
    Mmf(f64),
    /// `f(y) = 1 - exp(-lambda y)`.
    Exponential(f64),
    /// `f(y) = ln(1 + y)`.
    SmoothNash,
    /// `f(y) = ln ln(1 + y)`.
    LogLog,
    /// `f(y) = 2 ln y - ln(1 + y)`.
    ComboNash,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelfareTerms {
    pub f: f64,
    pub f_prime: f64,
    pub g: f64,
}

impl WelfareRule {
    pub fn gamma(gamma: f64) -> Result<Self> {
        let rule = WelfareRule::GammaFair(gamma);
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WelfareRule::GammaFair(g) if !(g.is_finite() && g <= 1.0 && g != 0.0) => Err(
                Error::InvalidRule(format!("gamma-fair exponent {g} must be finite, <= 1 and nonzero")),
            ),
            WelfareRule::Mmf(g) if !(g.is_finite() && g < 0.0) => {
                Err(Error::InvalidRule(format!("max-min exponent {g} must be negative")))
            }
            WelfareRule::Exponential(l) if !(l.is_finite() && l > 0.0) => {
                Err(Error::InvalidRule(format!("exponential rate {l} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Exponent of the gamma-fair family this rule belongs to, if any.
    pub fn gamma_exponent(&self) -> Option<f64> {
        match *self {
            WelfareRule::Social => Some(1.0),
            WelfareRule::Nash => Some(0.0),
            WelfareRule::GammaFair(g) | WelfareRule::Mmf(g) => Some(g),
            _ => None,
        }
    }

    /// True when `f(0) = -inf`, i.e. an agent stuck at zero value makes the objective meaningless.
    pub fn diverges_at_zero(&self) -> bool {
        match *self {
            WelfareRule::Nash | WelfareRule::LogLog | WelfareRule::ComboNash => true,
            WelfareRule::GammaFair(g) | WelfareRule::Mmf(g) => g < 0.0,
            _ => false,
        }
    }

    /// Objective value. Callers guarantee `y > 0`.
    #[inline]
    pub fn f(&self, y: f64) -> f64 {
        match *self {
            WelfareRule::Social => y,
            WelfareRule::Nash => y.ln(),
            WelfareRule::GammaFair(g) | WelfareRule::Mmf(g) => y.powf(g) / g,
            WelfareRule::Exponential(l) => -(-l * y).exp_m1(),
            WelfareRule::SmoothNash => y.ln_1p(),
            WelfareRule::LogLog => y.ln_1p().ln(),
            WelfareRule::ComboNash => 2.0 * y.ln() - y.ln_1p(),
        }
    }

    #[inline]
    pub fn f_prime(&self, y: f64) -> f64 {
        match *self {
            WelfareRule::Social => 1.0,
            WelfareRule::Nash => 1.0 / y,
            WelfareRule::GammaFair(g) | WelfareRule::Mmf(g) => y.powf(g - 1.0),
            WelfareRule::Exponential(l) => l * (-l * y).exp(),
            WelfareRule::SmoothNash => 1.0 / (1.0 + y),
            WelfareRule::LogLog => 1.0 / ((1.0 + y) * y.ln_1p()),
            WelfareRule::ComboNash => 2.0 / y - 1.0 / (1.0 + y),
        }
    }

    #[inline]
    pub fn g(&self, y: f64) -> f64 {
        match *self {
            WelfareRule::Social => y,
            WelfareRule::Nash => 1.0,
            WelfareRule::GammaFair(g) | WelfareRule::Mmf(g) => y.powf(g),
            WelfareRule::Exponential(l) => l * y * (-l * y).exp(),
            WelfareRule::SmoothNash => y / (1.0 + y),
            WelfareRule::LogLog => y / ((1.0 + y) * y.ln_1p()),
            WelfareRule::ComboNash => 2.0 - y / (1.0 + y),
        }
    }

    /// Short name used on the command line and in reports.
    pub fn name(&self) -> String {
        self.to_string()
    }
}

pub fn welfare_terms(rule: &WelfareRule, y: f64) -> Result<WelfareTerms> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::NonPositiveArgument(y));
    }
    rule.validate()?;
    Ok(WelfareTerms { f: rule.f(y), f_prime: rule.f_prime(y), g: rule.g(y) })
}

/// `min g(y) / g(x)` over positive arguments, tabulated per family.
pub fn delta_of(rule: &WelfareRule) -> f64 {
    match rule {
        WelfareRule::Nash => 1.0,
        WelfareRule::ComboNash => 0.5,
        _ => 0.0,
    }
}

/// Root in `[0, 1]` of `p^(1 - gamma) + p = 1`: the monotonicity factor of a gamma-fair rule.
pub fn pmon_bound(gamma: f64) -> f64 {
    if gamma >= 1.0 {
        return 0.0;
    }
    let h = |p: f64| p.powf(1.0 - gamma) + p - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl fmt::Display for WelfareRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WelfareRule::Social => write!(f, "sw"),
            WelfareRule::Nash => write!(f, "nw"),
            WelfareRule::GammaFair(g) => write!(f, "gamma={g}"),
            WelfareRule::Mmf(g) => write!(f, "mmf={g}"),
            WelfareRule::Exponential(l) => write!(f, "exp={l}"),
            WelfareRule::SmoothNash => write!(f, "snw"),
            WelfareRule::LogLog => write!(f, "loglog"),
            WelfareRule::ComboNash => write!(f, "combo"),
        }
    }
}

impl FromStr for WelfareRule {
    type Err = Error;

    /// Accepts `sw`, `nw`, `gamma=<real>`, `mmf[=<real>]`, `exp=<rate>`, `snw`, `loglog`, `combo`.
    /// `gamma=0` is read as Nash welfare and `gamma=1` as social welfare.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse_num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidRule(format!("bad number in rule {s:?}")))
        };
        let rule = match s.split_once('=') {
            None => match s.as_str() {
                "sw" | "social" => WelfareRule::Social,
                "nw" | "nash" => WelfareRule::Nash,
                "mmf" => WelfareRule::Mmf(MMF_DEFAULT_GAMMA),
                "snw" => WelfareRule::SmoothNash,
                "loglog" => WelfareRule::LogLog,
                "combo" => WelfareRule::ComboNash,
                _ => return Err(Error::InvalidRule(format!("unknown rule {s:?}"))),
            },
            Some(("gamma", v)) => {
                let g = parse_num(v)?;
                if g == 0.0 {
                    WelfareRule::Nash
                } else if g == 1.0 {
                    WelfareRule::Social
                } else {
                    WelfareRule::GammaFair(g)
                }
            }
            Some(("mmf", v)) => WelfareRule::Mmf(parse_num(v)?),
            Some(("exp", v)) => WelfareRule::Exponential(parse_num(v)?),
            _ => return Err(Error::InvalidRule(format!("unknown rule {s:?}"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for WelfareRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WelfareRule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
