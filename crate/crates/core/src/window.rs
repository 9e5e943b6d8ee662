use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Tapers used for FIR truncation and for spectral analysis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Window {
    #[default]
    None,
    Hann,
    Blackman,
    Kaiser(f64),
}

impl Window {
    /// Window value at normalized position `x` in `[-1, 1]` (0 is the center).
    /// Outside that range the taper is zero, except for the rectangular window.
    pub fn at(&self, x: f64) -> f64 {
        if matches!(self, Window::None) {
            return 1.0;
        }
        if x.abs() > 1.0 + 1e-12 {
            return 0.0;
        }
        let x = x.clamp(-1.0, 1.0);
        match *self {
            Window::None => 1.0,
            Window::Hann => 0.5 * (1.0 + (PI * x).cos()),
            Window::Blackman => 0.42 + 0.5 * (PI * x).cos() + 0.08 * (2.0 * PI * x).cos(),
            Window::Kaiser(beta) => bessel_i0(beta * (1.0 - x * x).max(0.0).sqrt()) / bessel_i0(beta),
        }
    }

    /// Symmetric `n`-point window.
    pub fn symmetric(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let half = (n - 1) as f64 / 2.0;
        (0..n).map(|i| self.at((i as f64 - half) / half)).collect()
    }

    /// DFT-even `n`-point window for spectral analysis.
    pub fn periodic(&self, n: usize) -> Vec<f64> {
        let half = n as f64 / 2.0;
        (0..n).map(|i| self.at((i as f64 - half) / half)).collect()
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::None => write!(f, "none"),
            Window::Hann => write!(f, "hann"),
            Window::Blackman => write!(f, "blackman"),
            Window::Kaiser(beta) => write!(f, "kaiser:{beta}"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "none" | "rect" | "rectangular" => Ok(Window::None),
            "hann" | "hanning" => Ok(Window::Hann),
            "blackman" => Ok(Window::Blackman),
            "kaiser" => Ok(Window::Kaiser(8.0)),
            _ => {
                let beta = s
                    .strip_prefix("kaiser:")
                    .or_else(|| s.strip_prefix("kaiser(").and_then(|r| r.strip_suffix(')')))
                    .and_then(|b| b.parse::<f64>().ok())
                    .filter(|b| b.is_finite() && *b >= 0.0);
                beta.map(Window::Kaiser)
                    .ok_or_else(|| Error::Config(format!("unknown window '{s}'")))
            }
        }
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
