//! Step sizes and utility weights.
//!
//! With `alpha_t = (H + 1) / (H + t)` the averaging coefficients are
//! `alpha_t^j = alpha_j * prod_{k=j+1}^{t} (1 - alpha_k)` and the utility
//! weight `w_t = alpha_t^t / alpha_t^1` has the closed form `C(H + t - 1, H)`.
//! The ratio `alpha_t^j / alpha_t^1` does not depend on `t`, so
//! `alpha_t^j = w_j / sum_{k <= t} w_k` and the partial sums telescope to
//! `sum_{k <= t} w_k = C(H + t, H + 1)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    horizon: usize,
    base_eta: f64,
}

impl WeightSchedule {
    pub fn new(horizon: usize, base_eta: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        if !(base_eta > 0.0 && base_eta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "base learning rate must be positive, got {base_eta}"
            )));
        }
        Ok(Self { horizon, base_eta })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn base_eta(&self) -> f64 {
        self.base_eta
    }

    fn check(t: usize) -> Result<()> {
        if t == 0 {
            Err(Error::InvalidInput("rounds are numbered from 1".into()))
        } else {
            Ok(())
        }
    }

    /// `alpha_t = (H + 1) / (H + t)`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        Self::check(t)?;
        Ok(self.step(t))
    }

    #[inline]
    pub(crate) fn step(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        (self.horizon + 1) as f64 / (self.horizon + t) as f64
    }

    /// `(alpha_t^1, ..., alpha_t^t)` evaluated by the product recursion.
    pub fn alpha_profile(&self, t: usize) -> Result<Vec<f64>> {
        Self::check(t)?;
        let mut out = vec![0.0; t];
        let mut tail = 1.0;
        for j in (1..=t).rev() {
            let a = self.step(j);
            out[j - 1] = a * tail;
            tail *= 1.0 - a;
        }
        Ok(out)
    }

    /// `w_t = C(H + t - 1, H)` as a float. Each partial product is itself a
    /// binomial coefficient, so the value is exact while it fits in 53 bits.
    pub fn w(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        binomial_f64(self.horizon + t - 1, self.horizon)
    }

    pub fn ln_w(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        (1..=self.horizon)
            .map(|k| ((t - 1 + k) as f64 / k as f64).ln())
            .sum()
    }

    /// `w_t` as an exact integer, `None` on `u128` overflow.
    pub fn w_exact(&self, t: usize) -> Option<u128> {
        if t == 0 {
            return None;
        }
        binomial_u128(self.horizon + t - 1, self.horizon)
    }

    /// `w_t / w_{t+1} = t / (H + t)`.
    #[inline]
    pub fn w_decay(&self, t: usize) -> f64 {
        t as f64 / (self.horizon + t) as f64
    }

    /// `kappa_t = w_t / w_{t-1} = (H + t - 1) / (t - 1)`; 1 at `t = 1` where
    /// it only ever multiplies a zero vector.
    pub fn kappa(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            (self.horizon + t - 1) as f64 / (t - 1) as f64
        }
    }

    /// `eta_t = eta / w_t`.
    pub fn eta_t(&self, t: usize) -> Result<f64> {
        Self::check(t)?;
        Ok(self.base_eta / self.w(t))
    }

    /// `alpha_t^1 = alpha_t / w_t`.
    pub fn alpha_first(&self, t: usize) -> f64 {
        self.step(t) / self.w(t)
    }

    /// `sum_{k <= t} w_k = C(H + t, H + 1)`; zero at `t = 0`.
    pub fn cumulative_w(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            binomial_f64(self.horizon + t, self.horizon + 1)
        }
    }

    /// Draws `j` in `1..=t` with probability `alpha_t^j`, given `u` uniform
    /// on `[0, 1)`. Binary search over the closed-form partial sums.
    pub fn sample_index(&self, t: usize, u: f64) -> usize {
        debug_assert!(t >= 1);
        let target = u * self.cumulative_w(t);
        let (mut lo, mut hi) = (1usize, t);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.cumulative_w(mid) > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// `1 / (24 H sqrt(H) N)`.
pub fn theoretical_eta(horizon: usize, num_players: usize) -> f64 {
    let h = horizon as f64;
    1.0 / (24.0 * h * h.sqrt() * num_players as f64)
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 1..=k {
        c = c * (n - k + i) as f64 / i as f64;
    }
    c
}

fn binomial_u128(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        // c * (n - k + i) is divisible by i
        c = c.checked_mul(n as u128 - k as u128 + i)? / i;
    }
    Some(c)
}
