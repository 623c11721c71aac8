//! Spatial tilt-field generators: a 2D funnel that drags packets toward a
//! central hole and a 1D tanh interface separating a flat region from an
//! over-tilted one.

use crate::error::{Error, Result};
use crate::lattice::{Dimensionality, LatticeSpec};
use crate::scalar::Real;

/// How a field was produced; kept for run metadata and serialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator<T: Real> {
    Zero,
    Uniform {
        vx: T,
        vy: T,
    },
    Funnel {
        gamma: T,
        center: (T, T),
        r_cap: T,
        v_max: T,
    },
    TanhInterface {
        gamma_t: T,
        x_h: T,
        depth: T,
    },
}

/// Per-cell tilt vector (Vx, Vy) on an nx-by-ny cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField<T: Real> {
    nx: usize,
    ny: usize,
    vx: Vec<T>,
    vy: Vec<T>,
    pub generator: Generator<T>,
    /// Set when a funnel center lies outside the grid; allowed but recorded.
    pub center_outside: bool,
    /// Set when every stored value has been sign-flipped.
    pub negated: bool,
}

impl<T: Real> PotentialField<T> {
    fn blank(nx: usize, ny: usize, generator: Generator<T>) -> Self {
        PotentialField {
            nx,
            ny,
            vx: vec![T::zero(); nx * ny],
            vy: vec![T::zero(); nx * ny],
            generator,
            center_outside: false,
            negated: false,
        }
    }

    pub fn zero(spec: &LatticeSpec<T>) -> Self {
        Self::blank(spec.nx, spec.ny, Generator::Zero)
    }

    pub fn uniform(spec: &LatticeSpec<T>, vx: T, vy: T) -> Result<Self> {
        if !vx.is_finite() || !vy.is_finite() {
            return Err(Error::param("v", "uniform tilt must be finite"));
        }
        let mut field = Self::blank(spec.nx, spec.ny, Generator::Uniform { vx, vy });
        field.vx.fill(vx);
        field.vy.fill(vy);
        Ok(field)
    }

    /// Radial tilt V_t(r) = min(gamma/r, v_max) pointing from each cell
    /// toward `center`, with coordinates in cell units.
    ///
    /// The circle of radius gamma (where the tilt magnitude reaches 1) must
    /// fit inside the grid when the center does; a center outside the grid
    /// is allowed but flagged.
    pub fn funnel(
        spec: &LatticeSpec<T>,
        gamma: T,
        center: (T, T),
        r_cap: T,
        v_max: T,
    ) -> Result<Self> {
        if spec.dimensionality != Dimensionality::Grid2d {
            return Err(Error::param("spec", "funnel field requires a 2d grid"));
        }
        if !gamma.is_finite() || gamma < T::zero() {
            return Err(Error::param("gamma", "must be finite and >= 0"));
        }
        if !(r_cap > T::zero()) {
            return Err(Error::param("r_cap", "must be > 0"));
        }
        if !v_max.is_finite() || v_max < T::zero() {
            return Err(Error::param("v_max", "must be finite and >= 0"));
        }
        if !center.0.is_finite() || !center.1.is_finite() {
            return Err(Error::param("center", "must be finite"));
        }
        let (cx, cy) = center;
        let xmax = T::lit((spec.nx - 1) as f64);
        let ymax = T::lit((spec.ny - 1) as f64);
        let inside = cx >= T::zero() && cx <= xmax && cy >= T::zero() && cy <= ymax;
        if inside
            && (cx - gamma < T::zero()
                || cx + gamma > xmax
                || cy - gamma < T::zero()
                || cy + gamma > ymax)
        {
            return Err(Error::param(
                "gamma",
                "tilt-magnitude-1 circle of radius gamma does not fit inside the grid",
            ));
        }
        let mut field = Self::blank(
            spec.nx,
            spec.ny,
            Generator::Funnel {
                gamma,
                center,
                r_cap,
                v_max,
            },
        );
        field.center_outside = !inside;
        if gamma == T::zero() {
            return Ok(field);
        }
        for m in 0..spec.nx {
            for n in 0..spec.ny {
                let dx = cx - T::lit(m as f64);
                let dy = cy - T::lit(n as f64);
                let r = dx.hypot(dy);
                let idx = m * spec.ny + n;
                if r == T::zero() {
                    continue;
                }
                let vt = (gamma / r).min(v_max);
                field.vx[idx] = vt * dx / r;
                field.vy[idx] = vt * dy / r;
            }
        }
        Ok(field)
    }

    /// 1D interface Vx(x) = -(1 + tanh(gamma_t (x - x_h))): magnitude runs
    /// from 0 on the far left to 2 on the far right and is exactly 1 at x_h,
    /// pointing toward the flat side.
    pub fn tanh_interface(spec: &LatticeSpec<T>, gamma_t: T, x_h: T) -> Result<Self> {
        if spec.dimensionality != Dimensionality::Chain1d {
            return Err(Error::param("spec", "tanh interface requires a 1d chain"));
        }
        if !(gamma_t > T::zero()) || !gamma_t.is_finite() {
            return Err(Error::param("gamma_t", "must be finite and > 0"));
        }
        if !(x_h > T::zero()) || !(x_h < T::lit(spec.nx as f64)) {
            return Err(Error::param("x_h", "horizon must lie inside the chain"));
        }
        let depth = T::lit(2.0);
        let mut field = Self::blank(
            spec.nx,
            spec.ny,
            Generator::TanhInterface { gamma_t, x_h, depth },
        );
        for m in 0..spec.nx {
            let x = T::lit(m as f64);
            field.vx[m] = -(T::one() + (gamma_t * (x - x_h)).tanh());
        }
        Ok(field)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn v(&self, m: usize, n: usize) -> (T, T) {
        let idx = m * self.ny + n;
        (self.vx[idx], self.vy[idx])
    }

    /// Same field with every value sign-flipped; the tight-binding model
    /// drags packets opposite to the mechanical one, so quantum runs consume
    /// the negated field.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for v in out.vx.iter_mut().chain(out.vy.iter_mut()) {
            *v = -*v;
        }
        out.negated = !self.negated;
        out
    }

    /// Largest per-cell tilt magnitude.
    pub fn max_abs(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.vx.len() {
            let m = self.vx[i].hypot(self.vy[i]);
            if m > best {
                best = m;
            }
        }
        best
    }

    /// q-quantile (0..=1) of the per-cell tilt magnitude.
    pub fn abs_quantile(&self, q: f64) -> T {
        let mut mags: Vec<T> = (0..self.vx.len())
            .map(|i| self.vx[i].hypot(self.vy[i]))
            .collect();
        mags.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
        let pos = (q.clamp(0.0, 1.0) * (mags.len() - 1) as f64).round() as usize;
        mags[pos]
    }

    /// `Some((vx, vy))` when every cell holds the same value.
    pub fn uniform_value(&self) -> Option<(T, T)> {
        let (vx0, vy0) = (self.vx[0], self.vy[0]);
        let same = self
            .vx
            .iter()
            .zip(self.vy.iter())
            .all(|(&x, &y)| x == vx0 && y == vy0);
        same.then_some((vx0, vy0))
    }
}
