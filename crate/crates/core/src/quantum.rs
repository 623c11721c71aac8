//! First-order tight-binding reference: a Hermitian hopping operator with
//! the same band content as the mechanical network's upper branches, used
//! for side-by-side tunneling comparisons and as a correspondence check.

use std::ops::ControlFlow;

use crate::dynamics::{Branch, WavepacketSpec};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Csr, Dimensionality, LatticeSpec, Sublattice};
use crate::linalg::{eigen_hermitian_2x2, Mat2};
use crate::potential::PotentialField;
use crate::scalar::{cre, Cplx, Real};

/// Hermitian hopping operator compiled for one lattice and tilt field.
#[derive(Debug, Clone)]
pub struct QuantumModel<T: Real> {
    pub spec: LatticeSpec<T>,
    pub potential: PotentialField<T>,
    h: Csr<Cplx<T>>,
}

impl<T: Real> QuantumModel<T> {
    pub fn n_sites(&self) -> usize {
        self.spec.n_sites()
    }

    pub fn hamiltonian(&self) -> &Csr<Cplx<T>> {
        &self.h
    }

    /// out = H psi.
    pub fn apply_into(&self, psi: &[Cplx<T>], out: &mut [Cplx<T>]) {
        self.h.matvec_into(psi, out);
    }

    /// Row-sum norm of H, the step-size control quantity.
    pub fn inf_norm(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.h.n_rows() {
            let (_, vals) = self.h.row(r);
            let sum: T = vals.iter().map(|z| z.norm()).sum();
            worst = worst.max(sum);
        }
        worst
    }

    /// Largest step accepted by the integrator: 0.1 / |H|.
    pub fn max_stable_dt(&self) -> T {
        T::lit(0.1) / self.inf_norm().max(T::epsilon())
    }
}

/// Complex amplitudes per site plus the current time.
#[derive(Debug, Clone)]
pub struct QuantumState<T: Real> {
    pub psi: Vec<Cplx<T>>,
    pub t: T,
}

impl<T: Real> QuantumState<T> {
    pub fn zeros(n_sites: usize) -> Self {
        QuantumState {
            psi: vec![Cplx::default(); n_sites],
            t: T::zero(),
        }
    }

    pub fn norm(&self) -> T {
        self.psi
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// |psi|^2 per site.
    pub fn density(&self) -> Vec<T> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }
}

fn tilt_hop<T: Real>(t_j: T, v_here: T, v_there: T) -> Cplx<T> {
    // Bond-averaged tilt keeps the directed pair exactly conjugate.
    let mean = (v_here + v_there) * T::lit(0.5);
    Cplx::new(T::zero(), t_j * mean * T::lit(0.5))
}

/// Compiles the real-space hopping operator for the given tilt field.
/// Missing neighbors at fixed boundaries simply drop their terms.
pub fn build_hamiltonian<T: Real>(
    spec: &LatticeSpec<T>,
    field: &PotentialField<T>,
) -> Result<QuantumModel<T>> {
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
    let onsite_z = if spec.active_y() {
        T::lit(2.0) * spec.t_z
    } else {
        spec.t_z
    };
    let mut trips: Vec<(usize, usize, Cplx<T>)> = Vec::with_capacity(spec.n_sites() * 8);
    let mut push = |row: usize, col: usize, z: Cplx<T>| trips.push((row, col, z));

    for m in 0..spec.nx {
        for n in 0..spec.ny {
            let a = spec.site_index(m, n, Sublattice::A);
            let b = spec.site_index(m, n, Sublattice::B);
            let (vx_here, vy_here) = field.v(m, n);

            push(a, a, cre(onsite_z));
            push(b, b, cre(-onsite_z));

            for step in [1isize, -1] {
                let s = T::lit(step as f64);
                if let Some((mm, nn)) = spec.shift(m, n, step, 0) {
                    let an = spec.site_index(mm, nn, Sublattice::A);
                    let bn = spec.site_index(mm, nn, Sublattice::B);
                    let ix = Cplx::new(T::zero(), -s * spec.t_x * half);
                    push(a, bn, ix);
                    push(b, an, ix);
                    push(a, an, cre(-spec.t_z * half));
                    push(b, bn, cre(spec.t_z * half));
                    let tilt = tilt_hop(spec.t_x, vx_here, field.v(mm, nn).0) * cre(s);
                    push(a, an, tilt);
                    push(b, bn, tilt);
                }
                if spec.active_y() {
                    if let Some((mm, nn)) = spec.shift(m, n, 0, step) {
                        let an = spec.site_index(mm, nn, Sublattice::A);
                        let bn = spec.site_index(mm, nn, Sublattice::B);
                        let ty = spec.t_y * half * s;
                        push(a, bn, cre(-ty));
                        push(b, an, cre(ty));
                        push(a, an, cre(-spec.t_z * half));
                        push(b, bn, cre(spec.t_z * half));
                        let tilt = tilt_hop(spec.t_y, vy_here, field.v(mm, nn).1) * cre(s);
                        push(a, an, tilt);
                        push(b, bn, tilt);
                    }
                }
            }
        }
    }

    let h = Csr::from_triplets(spec.n_sites(), spec.n_sites(), trips);
    let deviation = hermitian_deviation(&h);
    let mut scale = T::zero();
    for (_, _, z) in h.triplets() {
        scale = scale.max(z.norm());
    }
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0)) * scale.max(T::one());
    if deviation > tol {
        return Err(Error::NotHermitian {
            context: "real-space hopping operator".into(),
            deviation: deviation.as_f64(),
        });
    }
    Ok(QuantumModel {
        spec: *spec,
        potential: field.clone(),
        h,
    })
}

fn hermitian_deviation<T: Real>(h: &Csr<Cplx<T>>) -> T {
    use std::collections::HashMap;
    let mut map: HashMap<(usize, usize), Cplx<T>> = HashMap::with_capacity(h.nnz());
    for (r, c, v) in h.triplets() {
        map.insert((r, c), v);
    }
    let mut dev = T::zero();
    for (&(r, c), &v) in &map {
        let mirror = map.get(&(c, r)).copied().unwrap_or_default();
        dev = dev.max((v - mirror.conj()).norm());
    }
    dev
}

/// Momentum-space 2x2 operator for a uniform tilt.
pub fn quantum_bloch<T: Real>(spec: &LatticeSpec<T>, v: (T, T), k: (T, T)) -> Mat2<T> {
    let (kx, ky) = (k.0 * spec.a, k.1 * spec.a);
    let sx = kx.sin();
    let (sy, cos_part) = if spec.active_y() {
        (
            ky.sin(),
            T::lit(2.0) - kx.cos() - ky.cos(),
        )
    } else {
        (T::zero(), T::one() - kx.cos())
    };
    let tilt = -(spec.t_x * v.0 * sx + spec.t_y * v.1 * sy);
    let hz = spec.t_z * cos_part;
    let hx = spec.t_x * sx;
    let hy = spec.t_y * sy;
    [
        [Cplx::new(tilt + hz, T::zero()), Cplx::new(hx, -hy)],
        [Cplx::new(hx, hy), Cplx::new(tilt - hz, T::zero())],
    ]
}

/// The two band energies at k, ascending.
pub fn quantum_bands<T: Real>(spec: &LatticeSpec<T>, v: (T, T), k: (T, T)) -> [T; 2] {
    let (vals, _) = eigen_hermitian_2x2(&quantum_bloch(spec, v, k));
    vals
}

/// Sorted-band group velocities along `dir` at k, by central differences.
pub fn band_slopes<T: Real>(spec: &LatticeSpec<T>, v: (T, T), k: (T, T), dir: (T, T)) -> [T; 2] {
    let d = T::lit(1e-4);
    let plus = quantum_bands(spec, v, (k.0 + d * dir.0, k.1 + d * dir.1));
    let minus = quantum_bands(spec, v, (k.0 - d * dir.0, k.1 - d * dir.1));
    let inv = T::one() / (T::lit(2.0) * d);
    [(plus[0] - minus[0]) * inv, (plus[1] - minus[1]) * inv]
}

/// What the quantum initializer selected.
#[derive(Debug, Clone)]
pub struct QuantumInitReport<T: Real> {
    pub energy: T,
    pub k0: (T, T),
    pub group_velocity: (T, T),
    pub warnings: Vec<String>,
}

/// Gaussian packet times the chosen band spinor of the local momentum-space
/// operator, frozen at the packet center; normalized to unit probability
/// then scaled by `amplitude`.
pub fn init_wavepacket_quantum<T: Real>(
    model: &QuantumModel<T>,
    wp: &WavepacketSpec<T>,
) -> Result<(QuantumState<T>, QuantumInitReport<T>)> {
    let spec = model.spec;
    if !(wp.sigma >= T::lit(4.0)) {
        return Err(Error::param("sigma", "packet width must be >= 4 cells"));
    }
    let k_edge = T::PI() / spec.a;
    if wp.k0.0.abs() > k_edge || wp.k0.1.abs() > k_edge {
        return Err(Error::param("k0", "carrier outside the Brillouin zone"));
    }
    let (cx, cy) = wp.center;
    let xmax = T::lit((spec.nx - 1) as f64);
    let ymax = T::lit((spec.ny - 1) as f64);
    if cx < T::zero() || cx > xmax || cy < T::zero() || cy > ymax {
        return Err(Error::param("center", "packet center outside the grid"));
    }

    let mc = (cx.round().as_f64() as usize).min(spec.nx - 1);
    let nc = (cy.round().as_f64() as usize).min(spec.ny - 1);
    let v_local = model.potential.v(mc, nc);

    let knorm = wp.k0.0.hypot(wp.k0.1);
    let dir = if knorm > T::zero() {
        (wp.k0.0 / knorm, wp.k0.1 / knorm)
    } else {
        (T::one(), T::zero())
    };
    let bands = quantum_bands(&spec, v_local, wp.k0);
    let gap = bands[1] - bands[0];
    if gap < T::lit(1e-6) {
        return Err(Error::DegenerateBranch { gap: gap.as_f64() });
    }
    let slopes = band_slopes(&spec, v_local, wp.k0, dir);
    let band = match wp.branch {
        Branch::Slow => {
            if slopes[0].abs() <= slopes[1].abs() {
                0
            } else {
                1
            }
        }
        Branch::Fast => {
            if slopes[0].abs() > slopes[1].abs() {
                0
            } else {
                1
            }
        }
        Branch::Forward => {
            if slopes[0] > slopes[1] {
                0
            } else {
                1
            }
        }
        Branch::NearCrossing => {
            if bands[0].abs() <= bands[1].abs() {
                0
            } else {
                1
            }
        }
    };
    let (_, vectors) = eigen_hermitian_2x2(&quantum_bloch(&spec, v_local, wp.k0));
    let spinor = vectors[band];
    let energy = bands[band];

    let group_velocity = match spec.dimensionality {
        Dimensionality::Grid2d => {
            let gx = band_slopes(&spec, v_local, wp.k0, (T::one(), T::zero()))[band];
            let gy = band_slopes(&spec, v_local, wp.k0, (T::zero(), T::one()))[band];
            (gx, gy)
        }
        Dimensionality::Chain1d => (slopes[band] * dir.0.signum(), T::zero()),
    };

    let mut warnings = Vec::new();
    if spec.boundary != Boundary::Periodic {
        let three_sigma = T::lit(3.0) * wp.sigma;
        let mut margin = cx.min(xmax - cx);
        if spec.dimensionality == Dimensionality::Grid2d {
            margin = margin.min(cy).min(ymax - cy);
        }
        if margin < three_sigma {
            warnings.push(format!(
                "packet center within 3 sigma of a fixed boundary (margin {margin})"
            ));
        }
    }

    let mut state = QuantumState::zeros(model.n_sites());
    if wp.amplitude == T::zero() {
        return Ok((
            state,
            QuantumInitReport {
                energy,
                k0: wp.k0,
                group_velocity,
                warnings,
            },
        ));
    }

    let two_sigma_sq = T::lit(2.0) * wp.sigma * wp.sigma;
    let mut power = T::zero();
    for m in 0..spec.nx {
        for n in 0..spec.ny {
            let dx = T::lit(m as f64) - cx;
            let dy = T::lit(n as f64) - cy;
            let g = (-(dx * dx + dy * dy) / two_sigma_sq).exp();
            if g < T::lit(1e-14) {
                continue;
            }
            let (x, y) = spec.position(m, n);
            let phase = wp.k0.0 * x + wp.k0.1 * y;
            let wave = Cplx::new(phase.cos(), phase.sin()) * cre(g);
            let cell = spec.cell_index(m, n);
            state.psi[2 * cell] = wave * spinor[0];
            state.psi[2 * cell + 1] = wave * spinor[1];
            power += g * g;
        }
    }
    if power <= T::zero() {
        return Err(Error::param("sigma", "packet has no support on the grid"));
    }
    let scale = cre(wp.amplitude / power.sqrt());
    for z in &mut state.psi {
        *z *= scale;
    }
    Ok((
        state,
        QuantumInitReport {
            energy,
            k0: wp.k0,
            group_velocity,
            warnings,
        },
    ))
}

/// Scratch buffers for the complex RK4 step.
#[derive(Debug)]
pub struct SchrodingerWorkspace<T: Real> {
    acc: Vec<Cplx<T>>,
    stage: Vec<Cplx<T>>,
    deriv: Vec<Cplx<T>>,
}

impl<T: Real> SchrodingerWorkspace<T> {
    pub fn new(n_sites: usize) -> Self {
        let zeros = vec![Cplx::<T>::default(); n_sites];
        SchrodingerWorkspace {
            acc: zeros.clone(),
            stage: zeros.clone(),
            deriv: zeros,
        }
    }
}

fn times_minus_i<T: Real>(z: Cplx<T>) -> Cplx<T> {
    Cplx::new(z.im, -z.re)
}

/// One RK4 step of i dpsi/dt = H psi, in place.
pub fn schrodinger_step_in_place<T: Real>(
    model: &QuantumModel<T>,
    state: &mut QuantumState<T>,
    dt: T,
    ws: &mut SchrodingerWorkspace<T>,
) -> Result<()> {
    let n = model.n_sites();
    if state.psi.len() != n {
        return Err(Error::StateSizeMismatch {
            got: state.psi.len(),
            want: n,
        });
    }
    let half = cre(dt * T::lit(0.5));
    let two = cre(T::lit(2.0));
    let full = cre(dt);
    let psi = &mut state.psi;

    model.apply_into(psi, &mut ws.deriv);
    for i in 0..n {
        ws.deriv[i] = times_minus_i(ws.deriv[i]);
        ws.acc[i] = ws.deriv[i];
        ws.stage[i] = psi[i] + half * ws.deriv[i];
    }
    model.apply_into(&ws.stage, &mut ws.deriv);
    for i in 0..n {
        ws.deriv[i] = times_minus_i(ws.deriv[i]);
        ws.acc[i] += two * ws.deriv[i];
        ws.stage[i] = psi[i] + half * ws.deriv[i];
    }
    model.apply_into(&ws.stage, &mut ws.deriv);
    for i in 0..n {
        ws.deriv[i] = times_minus_i(ws.deriv[i]);
        ws.acc[i] += two * ws.deriv[i];
        ws.stage[i] = psi[i] + full * ws.deriv[i];
    }
    model.apply_into(&ws.stage, &mut ws.deriv);
    let sixth = cre(dt / T::lit(6.0));
    let mut finite = true;
    for i in 0..n {
        let z = psi[i] + sixth * (ws.acc[i] + times_minus_i(ws.deriv[i]));
        finite &= z.re.is_finite() && z.im.is_finite();
        psi[i] = z;
    }
    state.t += dt;
    if !finite {
        return Err(Error::NonFinite {
            context: "schrodinger rk4 step".into(),
            time: state.t.as_f64(),
        });
    }
    Ok(())
}

fn norm_drift_limit<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(100.0))
}

/// Steps the state `n_steps` times, watching the 2-norm against its initial
/// value, and invoking `on_step` after every step (and once at step 0) until
/// it breaks. Returns the number of steps taken.
pub fn schrodinger_evolve_with<T, F>(
    model: &QuantumModel<T>,
    state: &mut QuantumState<T>,
    dt: T,
    n_steps: usize,
    mut on_step: F,
) -> Result<usize>
where
    T: Real,
    F: FnMut(usize, &QuantumState<T>) -> ControlFlow<()>,
{
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "time step must be > 0"));
    }
    let bound = model.max_stable_dt();
    if dt > bound {
        return Err(Error::TimeStepTooLarge {
            dt: dt.as_f64(),
            bound: bound.as_f64(),
        });
    }
    let norm0 = state.norm();
    let limit = norm_drift_limit::<T>();
    let mut ws = SchrodingerWorkspace::new(model.n_sites());
    if on_step(0, state).is_break() {
        return Ok(0);
    }
    for step in 1..=n_steps {
        schrodinger_step_in_place(model, state, dt, &mut ws)?;
        let drift = (state.norm() - norm0).abs();
        if drift > limit {
            return Err(Error::NormDrift {
                drift: drift.as_f64(),
                limit: limit.as_f64(),
                time: state.t.as_f64(),
            });
        }
        if on_step(step, state).is_break() {
            return Ok(step);
        }
    }
    Ok(n_steps)
}

/// Integrates to `t_end` and returns the final state.
pub fn schrodinger_evolve<T: Real>(
    model: &QuantumModel<T>,
    state: QuantumState<T>,
    dt: T,
    t_end: T,
) -> Result<QuantumState<T>> {
    let n_steps = (t_end / dt).as_f64().round() as usize;
    let mut state = state;
    schrodinger_evolve_with(model, &mut state, dt, n_steps, |_, _| {
        ControlFlow::Continue(())
    })?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    #[test]
    fn bloch_operator_matches_the_pauli_form_at_the_zone_diagonal() {
        let spec = LatticeSpec::<f64>::grid(4, 4);
        let k = (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
        let h = quantum_bloch(&spec, (0.0, 0.0), k);
        // t_x sx + t_y sy + 2 t_z sz at unit couplings.
        assert!((h[0][0].re - 2.0).abs() < 1e-15);
        assert!((h[1][1].re + 2.0).abs() < 1e-15);
        assert!((h[0][1] - Cplx::new(1.0, -1.0)).norm() < 1e-15);
        let [lo, hi] = quantum_bands(&spec, (0.0, 0.0), k);
        assert!((hi - 6.0f64.sqrt()).abs() < 1e-12);
        assert!((lo + 6.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn chain_bands_follow_the_flat_region_formula() {
        let spec = LatticeSpec::<f64>::chain(16);
        for &vbar in &[0.0, 0.7, 2.0] {
            for i in 1..8 {
                let k = 0.4 * i as f64 - 1.6;
                let root = ((k.sin()).powi(2) + (1.0 - k.cos()).powi(2)).sqrt();
                let tilt = -vbar * k.sin();
                let bands = quantum_bands(&spec, (vbar, 0.0), (k, 0.0));
                assert!((bands[0] - (tilt - root)).abs() < 1e-12);
                assert!((bands[1] - (tilt + root)).abs() < 1e-12);
            }
        }
        let sym = quantum_bands(&spec, (0.0, 0.0), (0.9, 0.0));
        assert!((sym[0] + sym[1]).abs() < 1e-15);
    }

    #[test]
    fn real_space_operator_is_hermitian_for_a_nonuniform_tilt() {
        let spec = LatticeSpec::<f64>::chain(64);
        let field = PotentialField::tanh_interface(&spec, 0.2, 32.0).unwrap();
        let model = build_hamiltonian(&spec, &field).unwrap();
        assert!(hermitian_deviation(model.hamiltonian()) == 0.0);
        assert!(model.inf_norm() > 0.0);
    }

    #[test]
    fn plane_wave_is_an_eigenstate_on_the_periodic_chain() {
        let nx = 16;
        let spec = LatticeSpec::<f64>::chain(nx).with_boundary(Boundary::Periodic);
        let field = PotentialField::uniform(&spec, 0.5, 0.0).unwrap();
        let model = build_hamiltonian(&spec, &field).unwrap();
        let k = 2.0 * std::f64::consts::PI * 3.0 / nx as f64;
        let (vals, vecs) = eigen_hermitian_2x2(&quantum_bloch(&spec, (0.5, 0.0), (k, 0.0)));
        let mut psi = vec![Cplx::new(0.0, 0.0); spec.n_sites()];
        for m in 0..nx {
            let phase = Cplx::new(0.0, k * m as f64).exp();
            psi[2 * m] = phase * vecs[1][0];
            psi[2 * m + 1] = phase * vecs[1][1];
        }
        let mut out = psi.clone();
        model.apply_into(&psi, &mut out);
        for i in 0..psi.len() {
            assert!((out[i] - psi[i] * cre(vals[1])).norm() < 1e-12);
        }
    }

    #[test]
    fn eigenstate_acquires_only_a_phase() {
        let nx = 8;
        let spec = LatticeSpec::<f64>::chain(nx).with_boundary(Boundary::Periodic);
        let field = PotentialField::zero(&spec);
        let model = build_hamiltonian(&spec, &field).unwrap();
        let k = 2.0 * std::f64::consts::PI / nx as f64;
        let (vals, vecs) = eigen_hermitian_2x2(&quantum_bloch(&spec, (0.0, 0.0), (k, 0.0)));
        let energy = vals[0];
        let mut state = QuantumState::zeros(spec.n_sites());
        let norm = (nx as f64).sqrt();
        for m in 0..nx {
            let phase = Cplx::new(0.0, k * m as f64).exp() / cre(norm);
            state.psi[2 * m] = phase * vecs[0][0];
            state.psi[2 * m + 1] = phase * vecs[0][1];
        }
        let psi0 = state.psi.clone();
        let t_end = 3.0;
        let out = schrodinger_evolve(&model, state, 0.01, t_end).unwrap();
        let rot = Cplx::new(0.0, -energy * t_end).exp();
        for i in 0..psi0.len() {
            assert!((out.psi[i] - psi0[i] * rot).norm() < 1e-8);
        }
    }

    #[test]
    fn oversized_quantum_steps_are_rejected() {
        let spec = LatticeSpec::<f64>::chain(8);
        let field = PotentialField::zero(&spec);
        let model = build_hamiltonian(&spec, &field).unwrap();
        let state = QuantumState::zeros(model.n_sites());
        assert!(matches!(
            schrodinger_evolve(&model, state, 10.0, 20.0),
            Err(Error::TimeStepTooLarge { .. })
        ));
    }

    #[test]
    fn packet_normalizes_and_selects_the_slow_branch() {
        let spec = LatticeSpec::<f64>::chain(512);
        let field = PotentialField::uniform(&spec, 2.0, 0.0).unwrap();
        let model = build_hamiltonian(&spec, &field).unwrap();
        let omega = 0.05;
        let wp = WavepacketSpec {
            center: (256.0, 0.0),
            sigma: 30.0,
            k0: (-omega, 0.0),
            branch: Branch::Slow,
            amplitude: 1.0,
        };
        let (state, report) = init_wavepacket_quantum(&model, &wp).unwrap();
        let total: f64 = state.density().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((report.energy - omega).abs() < 2e-4, "E {}", report.energy);
        assert!(
            (report.group_velocity.0 + 1.0).abs() < 5e-3,
            "v {}",
            report.group_velocity.0
        );

        let zero = WavepacketSpec {
            amplitude: 0.0,
            ..wp
        };
        let (empty, _) = init_wavepacket_quantum(&model, &zero).unwrap();
        assert!(empty.psi.iter().all(|z| z.norm_sqr() == 0.0));
    }

    #[test]
    fn near_crossing_branch_selects_the_band_closest_to_zero() {
        let spec = LatticeSpec::<f64>::chain(512);
        let field = PotentialField::uniform(&spec, -2.0, 0.0).unwrap();
        let model = build_hamiltonian(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: (256.0, 0.0),
            sigma: 30.0,
            k0: (2.0606, 0.0),
            branch: Branch::NearCrossing,
            amplitude: 1.0,
        };
        let (_, report) = init_wavepacket_quantum(&model, &wp).unwrap();
        assert!((report.energy - 0.05).abs() < 1e-3, "E {}", report.energy);
        assert!(
            (report.group_velocity.0 + 1.457).abs() < 0.01,
            "v {}",
            report.group_velocity.0
        );
    }

    #[test]
    fn packet_momentum_peak_sits_at_the_carrier() {
        let spec = LatticeSpec::<f64>::chain(256);
        let field = PotentialField::zero(&spec);
        let model = build_hamiltonian(&spec, &field).unwrap();
        let k0 = 0.7;
        let wp = WavepacketSpec {
            center: (128.0, 0.0),
            sigma: 10.0,
            k0: (k0, 0.0),
            branch: Branch::Forward,
            amplitude: 1.0,
        };
        let (state, _) = init_wavepacket_quantum(&model, &wp).unwrap();
        let spectrum = crate::dynamics::spatial_spectrum(&spec, &state.psi);
        let ((kx, _), mag) = spectrum.peak();
        assert!((kx - k0).abs() < 0.05, "peak {kx}");
        assert!((mag - 1.0).abs() < 1e-12);
    }
}
