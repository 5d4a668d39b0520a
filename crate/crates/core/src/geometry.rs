//! Cohomology bookkeeping on Hirzebruch surfaces `F_k = P(O ⊕ O(-k))`.
//!
//! Divisor classes are written in the basis `(C₀, F)` where `C₀` is the
//! negative section (`C₀·C₀ = -k`) and `F` a fiber. A Kähler class is
//! recorded by its two periods: `f = [ω]·F` and `c = [ω]·C₀`. By
//! Nakai-Moishezon on this surface, a class is Kähler iff both are positive.

use crate::{Error, Result};

/// A divisor class `α·C₀ + β·F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivisorClass {
    pub section: f64,
    pub fiber: f64,
}

impl DivisorClass {
    pub const fn new(section: f64, fiber: f64) -> Self {
        DivisorClass { section, fiber }
    }

    pub fn scale(self, lambda: f64) -> Self {
        DivisorClass::new(lambda * self.section, lambda * self.fiber)
    }

    pub fn add(self, other: DivisorClass) -> Self {
        DivisorClass::new(self.section + other.section, self.fiber + other.fiber)
    }
}

/// `X = P(O ⊕ O(-k))` over `P¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BundleGeometry {
    k: u32,
}

impl BundleGeometry {
    pub const fn new(k: u32) -> Self {
        BundleGeometry { k }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn kf(&self) -> f64 {
        self.k as f64
    }

    /// The negative section `C₀`.
    pub fn section_curve(&self) -> DivisorClass {
        DivisorClass::new(1.0, 0.0)
    }

    pub fn fiber_curve(&self) -> DivisorClass {
        DivisorClass::new(0.0, 1.0)
    }

    /// Symmetric intersection pairing with `C₀² = -k`, `C₀·F = 1`, `F² = 0`.
    pub fn intersect(&self, a: DivisorClass, b: DivisorClass) -> f64 {
        -self.kf() * a.section * b.section + a.section * b.fiber + a.fiber * b.section
    }

    /// `K = -2·C₀ - (k+2)·F`.
    pub fn canonical(&self) -> DivisorClass {
        DivisorClass::new(-2.0, -(self.kf() + 2.0))
    }

    /// Periods `([D]·F, [D]·C₀)` of a divisor class.
    pub fn periods(&self, d: DivisorClass) -> KahlerClass {
        KahlerClass {
            fiber: self.intersect(d, self.fiber_curve()),
            section: self.intersect(d, self.section_curve()),
        }
    }

    /// Inverse of [`BundleGeometry::periods`].
    pub fn class_from_periods(&self, class: KahlerClass) -> DivisorClass {
        // α = f, β = c + k f
        DivisorClass::new(class.fiber, class.section + self.kf() * class.fiber)
    }

    /// Rates `(df/dt, dc/dt)` of the periods under `[ω₀] + t·c₁(K_X)`.
    pub fn period_rates(&self) -> (f64, f64) {
        let r = self.periods(self.canonical());
        (r.fiber, r.section)
    }
}

/// A class on `F_k` recorded by its periods against `F` and `C₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KahlerClass {
    pub fiber: f64,
    pub section: f64,
}

impl KahlerClass {
    pub const fn new(fiber: f64, section: f64) -> Self {
        KahlerClass { fiber, section }
    }

    pub fn is_kahler(&self) -> bool {
        self.fiber > 0.0 && self.section > 0.0
    }
}

/// Which period reaches zero at the singular time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vanishing {
    Fiber,
    Section,
    Both,
    /// The initial class is already on the boundary of the cone.
    Initial,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularTime {
    pub t: f64,
    pub vanishing: Vanishing,
}

/// Class trajectory `[ω₀] + t·c₁(K_X)` starting from periods `(f0, c0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KahlerClassPath {
    pub f0: f64,
    pub c0: f64,
}

impl KahlerClassPath {
    pub const fn new(f0: f64, c0: f64) -> Self {
        KahlerClassPath { f0, c0 }
    }

    pub fn initial(&self) -> KahlerClass {
        KahlerClass::new(self.f0, self.c0)
    }

    fn periods_at(&self, geom: &BundleGeometry, t: f64) -> KahlerClass {
        let (df, dc) = geom.period_rates();
        KahlerClass::new(self.f0 + df * t, self.c0 + dc * t)
    }

    pub fn class_at(&self, geom: &BundleGeometry, t: f64) -> Result<KahlerClass> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidTime(t));
        }
        let t_sing = self.singular_time(geom).t;
        if t > t_sing {
            return Err(Error::OutOfWindow { t, t_sing });
        }
        Ok(self.periods_at(geom, t))
    }

    pub fn singular_time(&self, geom: &BundleGeometry) -> SingularTime {
        if !(self.f0 > 0.0 && self.c0 > 0.0) {
            return SingularTime {
                t: 0.0,
                vanishing: Vanishing::Initial,
            };
        }
        let (df, dc) = geom.period_rates();
        let hit = |p0: f64, rate: f64| {
            if rate < 0.0 {
                -p0 / rate
            } else {
                f64::INFINITY
            }
        };
        let t_fiber = hit(self.f0, df);
        let t_section = hit(self.c0, dc);
        let vanishing = if t_fiber < t_section {
            Vanishing::Fiber
        } else if t_section < t_fiber {
            Vanishing::Section
        } else {
            Vanishing::Both
        };
        SingularTime {
            t: t_fiber.min(t_section),
            vanishing,
        }
    }

    /// The base period `c_B = c(T)` when the limiting class is a positive
    /// multiple of the pullback of the base class, `None` otherwise.
    pub fn base_collapse(&self, geom: &BundleGeometry) -> Option<f64> {
        let t_sing = self.singular_time(geom).t;
        let limit = self.periods_at(geom, t_sing);
        let f_vanishes = limit.fiber.abs() <= 1e-12 * self.f0.abs().max(1.0);
        (f_vanishes && limit.section > 0.0).then_some(limit.section)
    }

    pub fn is_base_collapse(&self, geom: &BundleGeometry) -> bool {
        self.base_collapse(geom).is_some()
    }
}

/// `[ω]²/2` for the class with the given periods.
pub fn class_volume(class: KahlerClass, geom: &BundleGeometry) -> f64 {
    (geom.kf() * class.fiber * class.fiber + 2.0 * class.fiber * class.section) / 2.0
}
