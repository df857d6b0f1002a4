use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A finite alphabet of `q` symbols, stored as `0..q`.
///
/// For binary alphabets symbols map to spins with `0 -> +1` and `1 -> -1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet {
    q: usize,
}

impl Alphabet {
    pub const BINARY: Alphabet = Alphabet { q: 2 };

    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("alphabet size must be at least 2, got {q}")));
        }
        if q > u8::MAX as usize + 1 {
            return Err(invalid(format!("alphabet size {q} exceeds 256")));
        }
        Ok(Alphabet { q })
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn is_binary(&self) -> bool {
        self.q == 2
    }

    #[inline]
    pub fn contains(&self, symbol: u8) -> bool {
        (symbol as usize) < self.q
    }

    pub fn check(&self, symbol: u8) -> Result<()> {
        if self.contains(symbol) {
            Ok(())
        } else {
            Err(invalid(format!(
                "symbol {symbol} out of range for alphabet of size {}",
                self.q
            )))
        }
    }

    /// Centered indicator `1 - 1/q` if `label == symbol`, else `-1/q`.
    #[inline]
    pub fn indicator(&self, label: u8, symbol: u8) -> f64 {
        let base = -1.0 / self.q as f64;
        if label == symbol {
            1.0 + base
        } else {
            base
        }
    }

    /// The vector `(Phi_0(symbol), ..., Phi_{q-1}(symbol))`.
    pub fn indicator_vector(&self, symbol: u8, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.q);
        let base = -1.0 / self.q as f64;
        out.fill(base);
        out[symbol as usize] += 1.0;
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = crate::Error;

    fn try_from(q: usize) -> Result<Self> {
        Alphabet::new(q)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.q
    }
}

/// Spin value of a binary symbol: `0 -> +1`, `1 -> -1`.
#[inline]
pub fn spin(symbol: u8) -> f64 {
    if symbol == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Inverse of [`spin`].
#[inline]
pub fn symbol_of_spin(spin: f64) -> u8 {
    if spin > 0.0 {
        0
    } else {
        1
    }
}
