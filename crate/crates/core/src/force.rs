//! Potentials and forces for the macroscopic component and the particles.

use nalgebra::DVector;

/// Built-in potential families.
///
/// HARMONIC has an unbounded force, so it violates the global boundedness
/// hypotheses; it is kept for its closed-form behaviour on bounded
/// trajectories. SOFT is globally bounded with `||F|| <= 1` and Lipschitz
/// constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// `W(q) = 1/2 ||q||^2`, `F(q) = -q`.
    Harmonic,
    /// `W(q) = sqrt(1 + ||q||^2) - 1`, `F(q) = -q / sqrt(1 + ||q||^2)`.
    Soft,
}

impl PotentialKind {
    pub fn value(&self, q: &DVector<f64>) -> f64 {
        let n2 = q.norm_squared();
        match self {
            PotentialKind::Harmonic => 0.5 * n2,
            PotentialKind::Soft => (1.0 + n2).sqrt() - 1.0,
        }
    }

    pub fn force(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            PotentialKind::Harmonic => -q,
            PotentialKind::Soft => -q / (1.0 + q.norm_squared()).sqrt(),
        }
    }
}

/// Internal forces of both systems: `F_0 = -grad W_0` acting on the
/// macroscopic component, `F_1 = -grad W_1` acting on each particle, plus
/// the particle mass `m`.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub w0: PotentialKind,
    pub w1: PotentialKind,
    /// Particle mass `m >= 0`.
    pub particle_mass: f64,
}

impl ForceField {
    pub fn new(w0: PotentialKind, w1: PotentialKind, particle_mass: f64) -> Self {
        assert!(particle_mass >= 0.0, "particle mass must be nonnegative");
        Self {
            w0,
            w1,
            particle_mass,
        }
    }

    pub fn harmonic(particle_mass: f64) -> Self {
        Self::new(PotentialKind::Harmonic, PotentialKind::Harmonic, particle_mass)
    }

    pub fn soft(particle_mass: f64) -> Self {
        Self::new(PotentialKind::Soft, PotentialKind::Soft, particle_mass)
    }

    #[inline]
    pub fn f0(&self, y: &DVector<f64>) -> DVector<f64> {
        self.w0.force(y)
    }

    #[inline]
    pub fn f1(&self, x: &DVector<f64>) -> DVector<f64> {
        self.w1.force(x)
    }

    #[inline]
    pub fn w0_value(&self, y: &DVector<f64>) -> f64 {
        self.w0.value(y)
    }

    #[inline]
    pub fn w1_value(&self, x: &DVector<f64>) -> f64 {
        self.w1.value(x)
    }

    /// `(F_1(X), F_0(y))` at one particle position and macro state.
    pub fn eval_forces(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.f1(x), self.f0(y))
    }
}
