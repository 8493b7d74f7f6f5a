use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A reduced `num:den` display aspect ratio, e.g. `9:16` for vertical video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AspectRatio {
    num: u32,
    den: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseAspectError {
    #[error("aspect ratio must look like W:H, got {0:?}")]
    Malformed(String),
    #[error("aspect ratio terms must be positive")]
    Zero,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl AspectRatio {
    pub const LANDSCAPE_16_9: AspectRatio = AspectRatio { num: 16, den: 9 };
    pub const PORTRAIT_9_16: AspectRatio = AspectRatio { num: 9, den: 16 };

    /// Builds a ratio from positive terms, reducing by their gcd.
    pub fn new(num: u32, den: u32) -> Result<Self, ParseAspectError> {
        if num == 0 || den == 0 {
            return Err(ParseAspectError::Zero);
        }
        let g = gcd(num as u64, den as u64) as u32;
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True when `w:h` equals this ratio up to the rounding introduced by
    /// flooring one side to an even pixel count, i.e. the side derived from
    /// the other is less than two pixels away from its ideal length.
    pub fn matches_dims(&self, w: u32, h: u32) -> bool {
        if w == 0 || h == 0 {
            return false;
        }
        let lhs = w as i128 * self.den as i128;
        let rhs = h as i128 * self.num as i128;
        (lhs - rhs).abs() < 2 * self.num.max(self.den) as i128
    }
}

impl fmt::Display for AspectRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

impl FromStr for AspectRatio {
    type Err = ParseAspectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ParseAspectError::Malformed(s.to_string());
        let (w, h) = s.trim().split_once(':').ok_or_else(malformed)?;
        let w: u32 = w.trim().parse().map_err(|_| malformed())?;
        let h: u32 = h.trim().parse().map_err(|_| malformed())?;
        AspectRatio::new(w, h)
    }
}

impl TryFrom<String> for AspectRatio {
    type Error = ParseAspectError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AspectRatio> for String {
    fn from(a: AspectRatio) -> String {
        a.to_string()
    }
}

/// Rounds down to the nearest even integer.
pub(crate) fn even_floor(v: f64) -> u32 {
    let v = v.max(0.0).floor() as u64;
    (v - v % 2) as u32
}
