//! Two-sublattice square network: geometry, the active feedback gain table,
//! passive host springs, and the compiled closed-loop force operator with
//! its Bloch reduction.

use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{m2_from_pauli, Mat2};
use crate::potential::PotentialField;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    pub const BOTH: [Sublattice; 2] = [Sublattice::A, Sublattice::B];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Sublattice::A => 0,
            Sublattice::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Fixed,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimensionality {
    Chain1d,
    Grid2d,
}

/// Cell counts, couplings, and boundary handling for one lattice build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec<T: Real> {
    pub nx: usize,
    pub ny: usize,
    pub a: T,
    pub t_x: T,
    pub t_y: T,
    pub t_z: T,
    pub beta: T,
    pub boundary: Boundary,
    pub dimensionality: Dimensionality,
}

impl<T: Real> LatticeSpec<T> {
    /// 2D grid with unit couplings and the marginally stable self-gain.
    pub fn grid(nx: usize, ny: usize) -> Self {
        LatticeSpec {
            nx,
            ny,
            a: T::one(),
            t_x: T::one(),
            t_y: T::one(),
            t_z: T::one(),
            beta: T::lit(-8.0),
            boundary: Boundary::Fixed,
            dimensionality: Dimensionality::Grid2d,
        }
    }

    /// 1D chain with y couplings switched off and the same default gains.
    pub fn chain(nx: usize) -> Self {
        LatticeSpec {
            nx,
            ny: 1,
            a: T::one(),
            t_x: T::one(),
            t_y: T::one(),
            t_z: T::one(),
            beta: T::lit(-8.0),
            boundary: Boundary::Fixed,
            dimensionality: Dimensionality::Chain1d,
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::param("nx/ny", "cell counts must be positive"));
        }
        if self.dimensionality == Dimensionality::Chain1d && self.ny != 1 {
            return Err(Error::param("ny", "a chain must have ny = 1"));
        }
        if !(self.t_z > T::zero()) {
            return Err(Error::param("t_z", "must be > 0"));
        }
        if !(self.a > T::zero()) {
            return Err(Error::param("a", "lattice constant must be > 0"));
        }
        for (name, v) in [
            ("t_x", self.t_x),
            ("t_y", self.t_y),
            ("t_z", self.t_z),
            ("beta", self.beta),
            ("a", self.a),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        2 * self.n_cells()
    }

    #[inline]
    pub fn cell_index(&self, m: usize, n: usize) -> usize {
        m * self.ny + n
    }

    #[inline]
    pub fn site_index(&self, m: usize, n: usize, s: Sublattice) -> usize {
        2 * self.cell_index(m, n) + s.index()
    }

    pub fn site_of(&self, index: usize) -> SiteId {
        let cell = index / 2;
        SiteId {
            m: cell / self.ny,
            n: cell % self.ny,
            sublattice: if index % 2 == 0 {
                Sublattice::A
            } else {
                Sublattice::B
            },
        }
    }

    /// Physical position of a cell in units of the lattice constant.
    #[inline]
    pub fn position(&self, m: usize, n: usize) -> (T, T) {
        (self.a * T::lit(m as f64), self.a * T::lit(n as f64))
    }

    /// Whether the y direction carries couplings.
    #[inline]
    pub fn active_y(&self) -> bool {
        self.dimensionality == Dimensionality::Grid2d
    }

    /// Resolves the cell offset by (dm, dn) under the boundary rule, or None
    /// when the neighbor does not exist.
    pub fn shift(&self, m: usize, n: usize, dm: isize, dn: isize) -> Option<(usize, usize)> {
        let step = |i: usize, d: isize, len: usize, periodic: bool| -> Option<usize> {
            let j = i as isize + d;
            if periodic {
                Some(j.rem_euclid(len as isize) as usize)
            } else if (0..len as isize).contains(&j) {
                Some(j as usize)
            } else {
                None
            }
        };
        let periodic = self.boundary == Boundary::Periodic;
        Some((
            step(m, dm, self.nx, periodic)?,
            step(n, dn, self.ny, periodic)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteId {
    pub m: usize,
    pub n: usize,
    pub sublattice: Sublattice,
}

/// Displacements and velocities of every site at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T: Real> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub t: T,
}

impl<T: Real> FieldState<T> {
    pub fn zeros(n_sites: usize) -> Self {
        FieldState {
            u: vec![T::zero(); n_sites],
            v: vec![T::zero(); n_sites],
            t: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Which measured signal a feedback gain multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Displacement,
    Velocity,
}

/// One feedback entry: force on `site` += `value` * signal at `source`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain<T: Real> {
    pub site: usize,
    pub source: usize,
    pub signal: Signal,
    pub value: T,
}

/// One passive spring, stored once per bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring<T: Real> {
    pub site: usize,
    pub neighbor: usize,
    pub stiffness: T,
}

/// Compressed sparse row matrix over a copyable scalar (real or complex).
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<E> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<E>,
}

impl<E> Csr<E>
where
    E: Copy + Zero + PartialEq + Send + Sync + std::ops::Mul<Output = E>,
{
    /// Builds from (row, col, value) triplets, summing duplicates and
    /// dropping entries that cancel to zero.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, E)>,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<E> = Vec::with_capacity(triplets.len());
        let mut it = triplets.into_iter().peekable();
        while let Some((r, c, v)) = it.next() {
            debug_assert!(r < n_rows && c < n_cols);
            let mut acc = v;
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    acc = acc + v2;
                    it.next();
                } else {
                    break;
                }
            }
            if !acc.is_zero() {
                row_ptr[r + 1] += 1;
                cols.push(c);
                vals.push(acc);
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[E]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// y = A x, rows evaluated independently (deterministic under threading).
    pub fn matvec_into(&self, x: &[E], y: &mut [E]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        y.par_iter_mut().with_min_len(512).enumerate().for_each(|(r, out)| {
            let mut acc = E::zero();
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.vals[idx] * x[self.cols[idx]];
            }
            *out = acc;
        });
    }

    /// Entry-wise transpose comparison helper: collects (row, col, value).
    pub fn triplets(&self) -> Vec<(usize, usize, E)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.cols[idx], self.vals[idx]));
            }
        }
        out
    }
}

/// A compiled lattice: the gain/spring tables plus the closed-loop force
/// operator split into its displacement and velocity parts.
#[derive(Debug, Clone)]
pub struct LatticeModel<T: Real> {
    pub spec: LatticeSpec<T>,
    pub potential: PotentialField<T>,
    pub host_table: Vec<Spring<T>>,
    pub gain_table: Vec<Gain<T>>,
    u_op: Csr<T>,
    v_op: Csr<T>,
}

/// The 2x2 Hermitian pair (M0, M1) of the momentum-space quadratic pencil
/// W^2 e = (M0 + W M1) e, tagged with the momentum and tilt it came from.
#[derive(Debug, Clone, Copy)]
pub struct BlochPencil<T: Real> {
    pub m0: Mat2<T>,
    pub m1: Mat2<T>,
    pub k: (T, T),
    pub v: (T, T),
}

/// Assembles springs, feedback gains, and the compiled force operator.
///
/// Per cell: sublattice A carries the self gain beta/2 on u, +-t_y/2 on u
/// of B at n+-1, -+Vx/2 on v of A at m+-1, -+Vy/2 on v of A at n+-1, and
/// +-t_x/2 on v of B at m+-1. Sublattice B carries -+t_y/2 on u of A at
/// n+-1, (beta + 8 t_z)/2 on its own u ((beta + 4 t_z)/2 on a chain), -t_z
/// on u of same-sublattice neighbors, +-t_x/2 on v of A at m+-1, -+Vx/2 on
/// v of B at m+-1, and -+Vy/2 on v of B at n+-1. Zero-valued gains are
/// omitted. Signs are the unique set whose Bloch reduction reproduces
/// `bloch_matrices`.
///
/// Tilt gains take V averaged over the bond they span: the velocity
/// coupling then stays exactly antisymmetric for any profile, so the
/// closed loop conserves the host energy instead of pumping or draining
/// it across tilt gradients.
pub fn build_lattice<T: Real>(
    spec: &LatticeSpec<T>,
    field: &PotentialField<T>,
) -> Result<LatticeModel<T>> {
    spec.validate()?;
    if field.nx() != spec.nx || field.ny() != spec.ny {
        return Err(Error::FieldSizeMismatch {
            got_nx: field.nx(),
            got_ny: field.ny(),
            want_nx: spec.nx,
            want_ny: spec.ny,
        });
    }

    let half = T::lit(0.5);
    let active_y = spec.active_y();
    let mut host_table = Vec::new();
    let mut gain_table = Vec::new();

    for m in 0..spec.nx {
        for n in 0..spec.ny {
            let (vx, vy) = field.v(m, n);
            if !vx.is_finite() || !vy.is_finite() {
                return Err(Error::param("potential", "non-finite tilt value"));
            }

            for s in Sublattice::BOTH {
                let site = spec.site_index(m, n, s);
                let mut bond = |dm: isize, dn: isize| {
                    if let Some((m2, n2)) = spec.shift(m, n, dm, dn) {
                        if (m2, n2) != (m, n) {
                            host_table.push(Spring {
                                site,
                                neighbor: spec.site_index(m2, n2, s),
                                stiffness: spec.t_z * half,
                            });
                        }
                    }
                };
                bond(1, 0);
                if active_y {
                    bond(0, 1);
                }
            }

            let push = |table: &mut Vec<Gain<T>>,
                            site: usize,
                            dm: isize,
                            dn: isize,
                            s: Sublattice,
                            signal: Signal,
                            value: T| {
                if value.is_zero() {
                    return;
                }
                if let Some((m2, n2)) = spec.shift(m, n, dm, dn) {
                    table.push(Gain {
                        site,
                        source: spec.site_index(m2, n2, s),
                        signal,
                        value,
                    });
                }
            };

            use Signal::{Displacement as U, Velocity as V};
            use Sublattice::{A, B};
            let ia = spec.site_index(m, n, A);
            let ib = spec.site_index(m, n, B);

            let bond_vx = |dm: isize| match spec.shift(m, n, dm, 0) {
                Some((m2, n2)) => (vx + field.v(m2, n2).0) * half,
                None => vx,
            };
            let bond_vy = |dn: isize| match spec.shift(m, n, 0, dn) {
                Some((m2, n2)) => (vy + field.v(m2, n2).1) * half,
                None => vy,
            };
            let (vx_p, vx_m) = (bond_vx(1), bond_vx(-1));
            let (vy_p, vy_m) = if active_y {
                (bond_vy(1), bond_vy(-1))
            } else {
                (vy, vy)
            };
            let g = &mut gain_table;

            push(g, ia, 0, 0, A, U, spec.beta * half);
            if active_y {
                push(g, ia, 0, 1, B, U, spec.t_y * half);
                push(g, ia, 0, -1, B, U, -spec.t_y * half);
            }
            push(g, ia, 1, 0, A, V, -vx_p * half);
            push(g, ia, -1, 0, A, V, vx_m * half);
            if active_y {
                push(g, ia, 0, 1, A, V, -vy_p * half);
                push(g, ia, 0, -1, A, V, vy_m * half);
            }
            push(g, ia, 1, 0, B, V, spec.t_x * half);
            push(g, ia, -1, 0, B, V, -spec.t_x * half);

            if active_y {
                push(g, ib, 0, 1, A, U, -spec.t_y * half);
                push(g, ib, 0, -1, A, U, spec.t_y * half);
            }
            let directions = if active_y { 2.0 } else { 1.0 };
            push(
                g,
                ib,
                0,
                0,
                B,
                U,
                (spec.beta + T::lit(4.0 * directions) * spec.t_z) * half,
            );
            push(g, ib, 1, 0, B, U, -spec.t_z);
            push(g, ib, -1, 0, B, U, -spec.t_z);
            if active_y {
                push(g, ib, 0, 1, B, U, -spec.t_z);
                push(g, ib, 0, -1, B, U, -spec.t_z);
            }
            push(g, ib, 1, 0, A, V, spec.t_x * half);
            push(g, ib, -1, 0, A, V, -spec.t_x * half);
            push(g, ib, 1, 0, B, V, -vx_p * half);
            push(g, ib, -1, 0, B, V, vx_m * half);
            if active_y {
                push(g, ib, 0, 1, B, V, -vy_p * half);
                push(g, ib, 0, -1, B, V, vy_m * half);
            }
        }
    }

    let n = spec.n_sites();
    let mut u_trip = Vec::with_capacity(4 * host_table.len() + gain_table.len());
    for spring in &host_table {
        let (i, j, k) = (spring.site, spring.neighbor, spring.stiffness);
        u_trip.push((i, i, -k));
        u_trip.push((i, j, k));
        u_trip.push((j, j, -k));
        u_trip.push((j, i, k));
    }
    let mut v_trip = Vec::new();
    for gain in &gain_table {
        let t = (gain.site, gain.source, gain.value);
        match gain.signal {
            Signal::Displacement => u_trip.push(t),
            Signal::Velocity => v_trip.push(t),
        }
    }
    let u_op = Csr::from_triplets(n, n, u_trip);
    let v_op = Csr::from_triplets(n, n, v_trip);

    Ok(LatticeModel {
        spec: *spec,
        potential: field.clone(),
        host_table,
        gain_table,
        u_op,
        v_op,
    })
}

impl<T: Real> LatticeModel<T> {
    pub fn n_sites(&self) -> usize {
        self.spec.n_sites()
    }

    /// Force-per-unit-mass from displacements (springs plus u gains).
    pub fn u_op(&self) -> &Csr<T> {
        &self.u_op
    }

    /// Force-per-unit-mass from velocities (v gains).
    pub fn v_op(&self) -> &Csr<T> {
        &self.v_op
    }

    /// accel = U u + V v, written into `out`.
    pub fn acceleration_into(&self, u: &[T], v: &[T], out: &mut [T]) {
        debug_assert_eq!(u.len(), self.n_sites());
        debug_assert_eq!(v.len(), self.n_sites());
        out.par_iter_mut().with_min_len(512).enumerate().for_each(|(r, dst)| {
            let mut acc = T::zero();
            let (cols, vals) = self.u_op.row(r);
            for (c, w) in cols.iter().zip(vals) {
                acc += *w * u[*c];
            }
            let (cols, vals) = self.v_op.row(r);
            for (c, w) in cols.iter().zip(vals) {
                acc += *w * v[*c];
            }
            *dst = acc;
        });
    }

    pub fn acceleration(&self, state: &FieldState<T>) -> Result<Vec<T>> {
        if state.len() != self.n_sites() || state.v.len() != self.n_sites() {
            return Err(Error::StateSizeMismatch {
                got: state.len(),
                want: self.n_sites(),
            });
        }
        let mut out = vec![T::zero(); self.n_sites()];
        self.acceleration_into(&state.u, &state.v, &mut out);
        Ok(out)
    }
}

/// Closed-form momentum-space pencil for a uniform tilt V at momentum k
/// (units of 1/a): M0 = -(beta/2) s0 + t_z (2 - cos kx a - cos ky a) sz
/// + t_y sin(ky a) sy and M1 = (Vx sin kx a + Vy sin ky a) s0
/// - t_x sin(kx a) sx. On a chain the sz factor becomes (1 - cos kx a) and
/// every y term is dropped.
pub fn bloch_matrices<T: Real>(spec: &LatticeSpec<T>, v: (T, T), k: (T, T)) -> BlochPencil<T> {
    let kx = k.0 * spec.a;
    let ky = k.1 * spec.a;
    let (sz_factor, sin_ky) = match spec.dimensionality {
        Dimensionality::Grid2d => (T::lit(2.0) - kx.cos() - ky.cos(), ky.sin()),
        Dimensionality::Chain1d => (T::one() - kx.cos(), T::zero()),
    };
    let (t_y, v_y) = match spec.dimensionality {
        Dimensionality::Grid2d => (spec.t_y, v.1),
        Dimensionality::Chain1d => (T::zero(), T::zero()),
    };
    let half = T::lit(0.5);
    let m0 = m2_from_pauli(
        -spec.beta * half,
        T::zero(),
        t_y * sin_ky,
        spec.t_z * sz_factor,
    );
    let m1 = m2_from_pauli(
        v.0 * kx.sin() + v_y * sin_ky,
        -spec.t_x * kx.sin(),
        T::zero(),
        T::zero(),
    );
    BlochPencil { m0, m1, k, v }
}
