//! Anhysteretic B-H laws.
//!
//! The saturating law is
//!
//! ```text
//! B(H) = μ0 μ_sat H + μ0 (μ_r - μ_sat) H0 atan(H / H0)
//! ```
//!
//! with `B'(0) = μ0 μ_r` and `B'(H) → μ0 μ_sat`. Its differential
//! permeability `μ0 (μ_sat + (μ_r - μ_sat) / (1 + (H/H0)²))` is bounded
//! below by `μ0 min(μ_r, μ_sat)`.

use std::f64::consts::PI;

pub const MU0: f64 = 4.0e-7 * PI;

/// Soft iron: `μ_r = 1000`, saturating near 2 T.
pub const SOFT_IRON: BhCurve = BhCurve { mu_r: 1000.0, h0: 1000.0, mu_sat: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MagneticLaw {
    Linear { mu: f64 },
    Saturating(BhCurve),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhCurve {
    pub mu_r: f64,
    pub h0: f64,
    pub mu_sat: f64,
}

impl BhCurve {
    pub fn b(&self, h: f64) -> f64 {
        MU0 * (self.mu_sat * h + (self.mu_r - self.mu_sat) * self.h0 * (h / self.h0).atan())
    }

    pub fn db(&self, h: f64) -> f64 {
        let s = h / self.h0;
        MU0 * (self.mu_sat + (self.mu_r - self.mu_sat) / (1.0 + s * s))
    }

    pub fn d2b(&self, h: f64) -> f64 {
        let s = h / self.h0;
        let q = 1.0 + s * s;
        -MU0 * (self.mu_r - self.mu_sat) * 2.0 * s / (self.h0 * q * q)
    }

    /// Inverse `H(B)` by safeguarded Newton.
    pub fn h(&self, b: f64) -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        let sign = b.signum();
        let target = b.abs();
        let min_slope = MU0 * self.mu_r.min(self.mu_sat);
        let (mut lo, mut hi) = (0.0, target / min_slope);
        let mut x = target / (MU0 * self.mu_r.max(self.mu_sat));
        for _ in 0..200 {
            let r = self.b(x) - target;
            if r.abs() <= 1e-15 * target {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - r / self.db(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-16 * x.abs() {
                x = next;
                break;
            }
            x = next;
        }
        sign * x
    }

    /// Probe report: `B(0) = 0`, `B' ≥ μ0` on a log grid, `B'(1e7)/μ0 - 1`.
    pub fn probes(&self) -> BhProbes {
        let zero_ok = self.b(0.0) == 0.0;
        let mut min_ratio = f64::INFINITY;
        for k in 0..=240 {
            let s = 10f64.powf(-3.0 + k as f64 * 12.0 / 240.0);
            min_ratio = min_ratio.min(self.db(s) / MU0);
        }
        let tail = (self.db(1e7) / MU0 - 1.0).abs();
        BhProbes { zero_ok, min_slope_ratio: min_ratio, tail_deviation: tail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhProbes {
    pub zero_ok: bool,
    pub min_slope_ratio: f64,
    pub tail_deviation: f64,
}

impl BhProbes {
    pub fn pass(&self) -> bool {
        self.zero_ok && self.min_slope_ratio >= 1.0 - 1e-12 && self.tail_deviation <= 0.01
    }
}

impl MagneticLaw {
    pub fn b(&self, h: f64) -> f64 {
        match self {
            MagneticLaw::Linear { mu } => mu * h,
            MagneticLaw::Saturating(c) => c.b(h),
        }
    }

    pub fn db(&self, h: f64) -> f64 {
        match self {
            MagneticLaw::Linear { mu } => *mu,
            MagneticLaw::Saturating(c) => c.db(h),
        }
    }

    pub fn d2b(&self, h: f64) -> f64 {
        match self {
            MagneticLaw::Linear { .. } => 0.0,
            MagneticLaw::Saturating(c) => c.d2b(h),
        }
    }

    pub fn h(&self, b: f64) -> f64 {
        match self {
            MagneticLaw::Linear { mu } => b / mu,
            MagneticLaw::Saturating(c) => c.h(b),
        }
    }

    /// Permeability at zero field.
    pub fn mu0(&self) -> f64 {
        self.db(0.0)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MagneticLaw::Linear { .. })
    }
}
