//! Size limits for the exhaustive routines.

use crate::error::{Error, Result};
use crate::polymatroid::MAX_GROUND_SET;

/// Environment variable that may lower (never raise) the buyer-count guard.
pub const GUARD_N_ENV: &str = "CLINCH_GUARD_N";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guards {
    /// Largest number of buyers accepted by the engine.
    pub max_buyers: usize,
    /// Largest total supply `f(N)`.
    pub max_supply: i64,
    /// Largest integer box enumerated by brute-force searches.
    pub max_lattice: u128,
}

impl Default for Guards {
    fn default() -> Self {
        Guards { max_buyers: MAX_GROUND_SET, max_supply: 1_000_000, max_lattice: 10_000_000 }
    }
}

impl Guards {
    /// Defaults, with `CLINCH_GUARD_N` applied if it is a smaller number.
    pub fn from_env() -> Self {
        let mut guards = Guards::default();
        if let Some(n) = std::env::var(GUARD_N_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            guards.max_buyers = guards.max_buyers.min(n);
        }
        guards
    }

    pub fn check_buyers(&self, n: usize) -> Result<()> {
        if n > self.max_buyers {
            return Err(Error::GuardExceeded { what: "buyers", value: n as u128, limit: self.max_buyers as u128 });
        }
        Ok(())
    }

    pub fn check_supply(&self, supply: i64) -> Result<()> {
        if supply > self.max_supply {
            return Err(Error::GuardExceeded {
                what: "total supply",
                value: supply as u128,
                limit: self.max_supply as u128,
            });
        }
        Ok(())
    }

    /// Size of the box `Π (bound_i + 1)`, failing once it passes the limit.
    pub fn check_lattice(&self, bounds: &[i64]) -> Result<u128> {
        let mut size: u128 = 1;
        for &b in bounds {
            size = size.saturating_mul(b.max(0) as u128 + 1);
            if size > self.max_lattice {
                return Err(Error::GuardExceeded { what: "lattice points", value: size, limit: self.max_lattice });
            }
        }
        Ok(size)
    }
}
