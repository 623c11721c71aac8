//! Time integration of the closed-loop network, Bloch-mode Gaussian
//! wavepacket initialization, and field diagnostics: energy, squared
//! amplitude, complex envelope, spatial spectra, and centroids.

use std::ops::ControlFlow;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Dimensionality, FieldState, LatticeModel, LatticeSpec};
use crate::linalg::vec2_dot;
use crate::scalar::{Cplx, Real};
use crate::spectra::{crossing_frequency, stability_scan, upper_branch_velocities};

/// Which of the two upper eigenbranches a wavepacket rides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Smaller |group velocity| along the launch direction.
    Slow,
    /// Larger |group velocity| along the launch direction.
    Fast,
    /// Most positive group velocity along the launch direction.
    Forward,
    /// Frequency nearest the branch-crossing point (chains only).
    NearCrossing,
}

/// Gaussian packet parameters; coordinates and width in cells.
#[derive(Debug, Clone, Copy)]
pub struct WavepacketSpec<T: Real> {
    pub center: (T, T),
    pub sigma: T,
    pub k0: (T, T),
    pub branch: Branch,
    pub amplitude: T,
}

/// What the initializer actually selected and measured.
#[derive(Debug, Clone)]
pub struct InitReport<T: Real> {
    pub omega0: T,
    pub k0: (T, T),
    pub group_velocity: (T, T),
    pub warnings: Vec<String>,
}

/// Strided record of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub energies: Vec<T>,
    pub centroids: Vec<(T, T)>,
    pub snapshots: Vec<FieldState<T>>,
    pub steps: usize,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveParams<T: Real> {
    pub dt: T,
    pub t_end: T,
    /// Steps between recorded snapshots.
    pub stride: usize,
    /// Carrier frequency used for the recorded envelope densities.
    pub carrier: T,
}

/// Scratch buffers for in-place Runge-Kutta steps.
#[derive(Debug)]
pub struct Rk4Workspace<T: Real> {
    du: Vec<T>,
    dv: Vec<T>,
    su: Vec<T>,
    sv: Vec<T>,
    av: Vec<T>,
}

impl<T: Real> Rk4Workspace<T> {
    pub fn new(n_sites: usize) -> Self {
        Rk4Workspace {
            du: vec![T::zero(); n_sites],
            dv: vec![T::zero(); n_sites],
            su: vec![T::zero(); n_sites],
            sv: vec![T::zero(); n_sites],
            av: vec![T::zero(); n_sites],
        }
    }
}

/// One classical RK4 step of (u' = v, v' = force), in place.
pub fn rk4_step_in_place<T: Real>(
    model: &LatticeModel<T>,
    state: &mut FieldState<T>,
    dt: T,
    ws: &mut Rk4Workspace<T>,
) -> Result<()> {
    let n = model.n_sites();
    if state.u.len() != n || state.v.len() != n {
        return Err(Error::StateSizeMismatch {
            got: state.u.len(),
            want: n,
        });
    }
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "time step must be > 0"));
    }
    let half = dt * T::lit(0.5);
    let two = T::lit(2.0);
    let (u, v) = (&mut state.u, &mut state.v);

    model.acceleration_into(u, v, &mut ws.av);
    for i in 0..n {
        ws.du[i] = v[i];
        ws.dv[i] = ws.av[i];
        ws.su[i] = u[i] + half * v[i];
        ws.sv[i] = v[i] + half * ws.av[i];
    }
    model.acceleration_into(&ws.su, &ws.sv, &mut ws.av);
    for i in 0..n {
        ws.du[i] += two * ws.sv[i];
        ws.dv[i] += two * ws.av[i];
        ws.su[i] = u[i] + half * ws.sv[i];
        ws.sv[i] = v[i] + half * ws.av[i];
    }
    model.acceleration_into(&ws.su, &ws.sv, &mut ws.av);
    for i in 0..n {
        ws.du[i] += two * ws.sv[i];
        ws.dv[i] += two * ws.av[i];
        ws.su[i] = u[i] + dt * ws.sv[i];
        ws.sv[i] = v[i] + dt * ws.av[i];
    }
    model.acceleration_into(&ws.su, &ws.sv, &mut ws.av);
    let sixth = dt / T::lit(6.0);
    let mut finite = true;
    for i in 0..n {
        u[i] += sixth * (ws.du[i] + ws.sv[i]);
        v[i] += sixth * (ws.dv[i] + ws.av[i]);
        finite &= u[i].is_finite() && v[i].is_finite();
    }
    state.t += dt;
    if !finite {
        return Err(Error::NonFinite {
            context: "classical rk4 step".into(),
            time: state.t.as_f64(),
        });
    }
    Ok(())
}

/// Allocating single step; returns the advanced state.
pub fn rk4_step<T: Real>(
    model: &LatticeModel<T>,
    state: &FieldState<T>,
    dt: T,
) -> Result<FieldState<T>> {
    let mut next = state.clone();
    let mut ws = Rk4Workspace::new(model.n_sites());
    rk4_step_in_place(model, &mut next, dt, &mut ws)?;
    Ok(next)
}

/// Largest time step accepted by `evolve`: 0.2 / W_max, with W_max scanned
/// over uniform tilts at zero and at the field's extreme magnitude (applied
/// along either axis for a grid).
pub fn max_stable_dt<T: Real>(model: &LatticeModel<T>) -> Result<T> {
    let spec = model.spec;
    let scan = LatticeSpec {
        boundary: Boundary::Periodic,
        ..spec
    };
    let vmax = model.potential.max_abs();
    let mut tilts = vec![(T::zero(), T::zero()), (vmax, T::zero())];
    if spec.dimensionality == Dimensionality::Grid2d {
        tilts.push((T::zero(), vmax));
    }
    let mut omega_max = T::zero();
    for v in tilts {
        let report = stability_scan(&scan, v, 32)?;
        omega_max = omega_max.max(report.max_abs_omega);
    }
    Ok(T::lit(0.2) / omega_max.max(T::epsilon()))
}

/// Total energy: kinetic plus the quadratic potential of the displacement
/// operator. Exactly conserved by the continuous dynamics whenever the
/// velocity gains are antisymmetric (uniform tilt).
pub fn energy<T: Real>(model: &LatticeModel<T>, state: &FieldState<T>) -> T {
    let mut scratch = vec![T::zero(); model.n_sites()];
    energy_with(model, state, &mut scratch)
}

fn energy_with<T: Real>(model: &LatticeModel<T>, state: &FieldState<T>, scratch: &mut [T]) -> T {
    model.u_op().matvec_into(&state.u, scratch);
    let half = T::lit(0.5);
    let mut kinetic = T::zero();
    let mut potential = T::zero();
    for i in 0..state.u.len() {
        kinetic += state.v[i] * state.v[i];
        potential -= state.u[i] * scratch[i];
    }
    half * (kinetic + potential)
}

/// Runs `n_steps` RK4 steps, invoking `on_step` after every step (and once
/// at step 0) until it breaks; returns the number of steps taken.
pub fn evolve_with<T, F>(
    model: &LatticeModel<T>,
    state: &mut FieldState<T>,
    dt: T,
    n_steps: usize,
    mut on_step: F,
) -> Result<usize>
where
    T: Real,
    F: FnMut(usize, &FieldState<T>) -> ControlFlow<()>,
{
    let mut ws = Rk4Workspace::new(model.n_sites());
    if on_step(0, state).is_break() {
        return Ok(0);
    }
    for step in 1..=n_steps {
        rk4_step_in_place(model, state, dt, &mut ws)?;
        if on_step(step, state).is_break() {
            return Ok(step);
        }
    }
    Ok(n_steps)
}

/// Integrates to `t_end`, recording snapshots, energy, and envelope centroid
/// every `stride` steps. Aborts when the energy grows past ten times its
/// initial value or the step exceeds the stability bound.
pub fn evolve<T: Real>(
    model: &LatticeModel<T>,
    state: FieldState<T>,
    params: &EvolveParams<T>,
) -> Result<Trajectory<T>> {
    if !(params.dt > T::zero()) || !(params.t_end >= T::zero()) {
        return Err(Error::param("dt/t_end", "must be positive"));
    }
    let bound = max_stable_dt(model)?;
    if params.dt > bound {
        return Err(Error::TimeStepTooLarge {
            dt: params.dt.as_f64(),
            bound: bound.as_f64(),
        });
    }
    let stride = params.stride.max(1);
    let n_steps = (params.t_end / params.dt).as_f64().round() as usize;

    let clock = Instant::now();
    let mut state = state;
    let mut scratch = vec![T::zero(); model.n_sites()];
    let mut traj = Trajectory {
        times: Vec::new(),
        energies: Vec::new(),
        centroids: Vec::new(),
        snapshots: Vec::new(),
        steps: n_steps,
        wall_secs: 0.0,
    };
    let e0 = energy_with(model, &state, &mut scratch);
    let floor = T::lit(1e-12);
    let record =
        |traj: &mut Trajectory<T>, state: &FieldState<T>, scratch: &mut [T]| -> Result<()> {
            let e = energy_with(model, state, scratch);
            if e0 > floor && e > T::lit(10.0) * e0 {
                return Err(Error::Instability {
                    ratio: (e / e0).as_f64(),
                    time: state.t.as_f64(),
                });
            }
            let density = amplitude_sq(state, params.carrier);
            traj.times.push(state.t);
            traj.energies.push(e);
            traj.centroids.push(centroid(&model.spec, &density));
            traj.snapshots.push(state.clone());
            Ok(())
        };

    record(&mut traj, &state, &mut scratch)?;
    let mut ws = Rk4Workspace::new(model.n_sites());
    for step in 1..=n_steps {
        rk4_step_in_place(model, &mut state, params.dt, &mut ws)?;
        if step % stride == 0 || step == n_steps {
            record(&mut traj, &state, &mut scratch)?;
        }
    }
    traj.wall_secs = clock.elapsed().as_secs_f64();
    Ok(traj)
}

/// Envelope density u^2 + (v/carrier)^2 per site; exact for a monochromatic
/// carrier at that frequency.
pub fn amplitude_sq<T: Real>(state: &FieldState<T>, carrier: T) -> Vec<T> {
    let inv = T::one() / carrier;
    state
        .u
        .iter()
        .zip(&state.v)
        .map(|(&u, &v)| u * u + (v * inv) * (v * inv))
        .collect()
}

/// Complex envelope u + i v/carrier, the analytic signal of a narrowband
/// packet riding e^{-i carrier t}.
pub fn complex_envelope<T: Real>(state: &FieldState<T>, carrier: T) -> Vec<Cplx<T>> {
    let inv = T::one() / carrier;
    state
        .u
        .iter()
        .zip(&state.v)
        .map(|(&u, &v)| Cplx::new(u, v * inv))
        .collect()
}

/// Density-weighted mean cell coordinate.
pub fn centroid<T: Real>(spec: &LatticeSpec<T>, density: &[T]) -> (T, T) {
    centroid_masked(spec, density, |_, _| true)
}

/// Centroid restricted to cells where `keep` holds.
pub fn centroid_masked<T: Real>(
    spec: &LatticeSpec<T>,
    density: &[T],
    keep: impl Fn(usize, usize) -> bool,
) -> (T, T) {
    let mut mx = T::zero();
    let mut my = T::zero();
    let mut total = T::zero();
    for (i, &d) in density.iter().enumerate() {
        let site = spec.site_of(i);
        if !keep(site.m, site.n) {
            continue;
        }
        mx += d * T::lit(site.m as f64);
        my += d * T::lit(site.n as f64);
        total += d;
    }
    if total > T::zero() {
        (mx / total, my / total)
    } else {
        (T::zero(), T::zero())
    }
}

/// |DFT|^2 over cells, summed across the two sublattices and normalized to
/// peak 1. Index (p, q) holds momentum (2 pi p / nx, 2 pi q / ny) per cell.
#[derive(Debug, Clone)]
pub struct SpatialSpectrum<T: Real> {
    pub nx: usize,
    pub ny: usize,
    pub mag: Vec<T>,
}

impl<T: Real> SpatialSpectrum<T> {
    /// Momentum of bin (p, q), folded into (-pi, pi] per axis.
    pub fn k_of(&self, p: usize, q: usize) -> (T, T) {
        let fold = |j: usize, n: usize| -> T {
            let j = j as isize;
            let n = n as isize;
            let signed = if 2 * j > n { j - n } else { j };
            T::lit(2.0) * T::PI() * T::lit(signed as f64) / T::lit(n as f64)
        };
        (fold(p, self.nx), fold(q, self.ny))
    }

    /// Momentum and magnitude of the largest bin.
    pub fn peak(&self) -> ((T, T), T) {
        let mut best = (0usize, T::zero());
        for (i, &m) in self.mag.iter().enumerate() {
            if m > best.1 {
                best = (i, m);
            }
        }
        let (p, q) = (best.0 / self.ny, best.0 % self.ny);
        (self.k_of(p, q), best.1)
    }
}

fn dft_line<T: Real>(input: &[Cplx<T>], output: &mut [Cplx<T>], twiddle: &[Cplx<T>]) {
    let n = input.len();
    for (q, out) in output.iter_mut().enumerate() {
        let mut acc = Cplx::default();
        for (m, &x) in input.iter().enumerate() {
            acc += x * twiddle[(q * m) % n];
        }
        *out = acc;
    }
}

fn twiddles<T: Real>(n: usize) -> Vec<Cplx<T>> {
    (0..n)
        .map(|j| {
            let phase = -T::lit(2.0) * T::PI() * T::lit(j as f64) / T::lit(n as f64);
            Cplx::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// Discrete spatial spectrum of per-site complex values (2 sites per cell,
/// cell-major layout as in `FieldState`).
pub fn spatial_spectrum<T: Real>(spec: &LatticeSpec<T>, values: &[Cplx<T>]) -> SpatialSpectrum<T> {
    let (nx, ny) = (spec.nx, spec.ny);
    debug_assert_eq!(values.len(), 2 * nx * ny);
    let tw_x = twiddles::<T>(nx);
    let tw_y = twiddles::<T>(ny);
    let mut mag = vec![T::zero(); nx * ny];
    let mut grid = vec![Cplx::<T>::default(); nx * ny];
    let mut line_in = vec![Cplx::<T>::default(); ny.max(nx)];
    let mut line_out = vec![Cplx::<T>::default(); ny.max(nx)];

    for subl in 0..2 {
        for m in 0..nx {
            for n in 0..ny {
                grid[m * ny + n] = values[2 * (m * ny + n) + subl];
            }
        }
        if ny > 1 {
            for m in 0..nx {
                line_in[..ny].copy_from_slice(&grid[m * ny..(m + 1) * ny]);
                dft_line(&line_in[..ny], &mut line_out[..ny], &tw_y);
                grid[m * ny..(m + 1) * ny].copy_from_slice(&line_out[..ny]);
            }
        }
        for n in 0..ny {
            for m in 0..nx {
                line_in[m] = grid[m * ny + n];
            }
            dft_line(&line_in[..nx], &mut line_out[..nx], &tw_x);
            for m in 0..nx {
                grid[m * ny + n] = line_out[m];
            }
        }
        for (dst, &z) in mag.iter_mut().zip(grid.iter()) {
            *dst += z.norm_sqr();
        }
    }
    let peak = mag.iter().fold(T::zero(), |a, &b| a.max(b));
    if peak > T::zero() {
        for v in &mut mag {
            *v /= peak;
        }
    }
    SpatialSpectrum { nx, ny, mag }
}

/// Builds a Gaussian packet modulating the selected upper branch at k0,
/// using the tilt at the packet center as a frozen uniform value for mode
/// selection. The complex envelope is normalized to unit power and scaled
/// by `amplitude`; u takes its real part and v the real part of its time
/// derivative at the branch frequency.
pub fn init_wavepacket_classical<T: Real>(
    model: &LatticeModel<T>,
    wp: &WavepacketSpec<T>,
) -> Result<(FieldState<T>, InitReport<T>)> {
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

    let mc = cx.round().as_f64() as usize;
    let nc = cy.round().as_f64() as usize;
    let v_local = model.potential.v(mc.min(spec.nx - 1), nc.min(spec.ny - 1));

    let knorm = wp.k0.0.hypot(wp.k0.1);
    let dir = if knorm > T::zero() {
        (wp.k0.0 / knorm, wp.k0.1 / knorm)
    } else {
        (T::one(), T::zero())
    };
    let pairs = upper_branch_velocities(&spec, v_local, wp.k0, dir)?;
    let omega_star = match wp.branch {
        Branch::NearCrossing => Some(crossing_frequency(&spec, (T::zero(), T::zero()))?),
        _ => None,
    };
    let pick = |a: &(crate::linalg::QuadMode<T>, T), b: &(crate::linalg::QuadMode<T>, T)| -> bool {
        // true selects a over b
        match wp.branch {
            Branch::Slow => a.1.abs() < b.1.abs(),
            Branch::Fast => a.1.abs() > b.1.abs(),
            Branch::Forward => a.1 > b.1,
            Branch::NearCrossing => {
                let os = omega_star.unwrap();
                (a.0.omega.re - os).abs() < (b.0.omega.re - os).abs()
            }
        }
    };
    let chosen = if pick(&pairs[0], &pairs[1]) {
        pairs[0]
    } else {
        pairs[1]
    };
    let (mode, v_along) = chosen;
    let omega0 = mode.omega.re;

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

    let group_velocity = match spec.dimensionality {
        Dimensionality::Grid2d => {
            let vx_pairs = upper_branch_velocities(&spec, v_local, wp.k0, (T::one(), T::zero()))?;
            let vy_pairs = upper_branch_velocities(&spec, v_local, wp.k0, (T::zero(), T::one()))?;
            let assign = |pairs: &[(crate::linalg::QuadMode<T>, T); 2]| -> T {
                let o0 = vec2_dot(&mode.vector, &pairs[0].0.vector).norm();
                let o1 = vec2_dot(&mode.vector, &pairs[1].0.vector).norm();
                if o0 >= o1 {
                    pairs[0].1
                } else {
                    pairs[1].1
                }
            };
            (assign(&vx_pairs), assign(&vy_pairs))
        }
        Dimensionality::Chain1d => (v_along * dir.0.signum(), T::zero()),
    };

    let mut state = FieldState::zeros(model.n_sites());
    if wp.amplitude == T::zero() {
        return Ok((
            state,
            InitReport {
                omega0,
                k0: wp.k0,
                group_velocity,
                warnings,
            },
        ));
    }

    let two_sigma_sq = T::lit(2.0) * wp.sigma * wp.sigma;
    let mut power = T::zero();
    let mut envelope = vec![Cplx::<T>::default(); model.n_sites()];
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
            let wave = Cplx::new(phase.cos(), phase.sin()) * Cplx::new(g, T::zero());
            let cell = spec.cell_index(m, n);
            envelope[2 * cell] = wave * mode.vector[0];
            envelope[2 * cell + 1] = wave * mode.vector[1];
            power += g * g;
        }
    }
    if power <= T::zero() {
        return Err(Error::param("sigma", "packet has no support on the grid"));
    }
    let scale = wp.amplitude / power.sqrt();
    for (i, z) in envelope.iter().enumerate() {
        let psi = z * Cplx::new(scale, T::zero());
        state.u[i] = psi.re;
        state.v[i] = omega0 * psi.im;
    }
    Ok((
        state,
        InitReport {
            omega0,
            k0: wp.k0,
            group_velocity,
            warnings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};
    use crate::potential::PotentialField;

    fn single_cell_model() -> LatticeModel<f64> {
        let spec = LatticeSpec::<f64>::chain(1).with_boundary(Boundary::Periodic);
        let field = PotentialField::zero(&spec);
        build_lattice(&spec, &field).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let model = single_cell_model();
        let state = FieldState::zeros(model.n_sites());
        let next = rk4_step(&model, &state, 0.05).unwrap();
        assert_eq!(next.u, state.u);
        assert_eq!(next.v, state.v);
        assert_eq!(next.t, 0.05);
    }

    #[test]
    fn decoupled_mode_returns_after_one_period() {
        // On a periodic single cell every inter-cell gain cancels, leaving
        // u_A'' = (beta/2) u_A with beta = -8: a frequency-2 oscillator.
        let model = single_cell_model();
        let mut state = FieldState::zeros(model.n_sites());
        state.u[0] = 1.0;
        let period = std::f64::consts::PI;
        let dt = period / 1000.0;
        let mut ws = Rk4Workspace::new(model.n_sites());
        for _ in 0..1000 {
            rk4_step_in_place(&model, &mut state, dt, &mut ws).unwrap();
        }
        assert!((state.u[0] - 1.0).abs() < 1e-10);
        assert!(state.v[0].abs() < 1e-9);
    }

    #[test]
    fn energy_is_quadratic_and_positive_for_the_marginal_gain() {
        let spec = LatticeSpec::<f64>::grid(6, 6).with_boundary(Boundary::Periodic);
        let field = PotentialField::uniform(&spec, 0.5, 0.0).unwrap();
        let model = build_lattice(&spec, &field).unwrap();
        let mut state = FieldState::zeros(model.n_sites());
        for (i, u) in state.u.iter_mut().enumerate() {
            *u = ((i * 37 % 17) as f64 - 8.0) / 17.0;
        }
        for (i, v) in state.v.iter_mut().enumerate() {
            *v = ((i * 53 % 13) as f64 - 6.0) / 13.0;
        }
        let e = energy(&model, &state);
        assert!(e > 0.0);
        let doubled = FieldState {
            u: state.u.iter().map(|x| 2.0 * x).collect(),
            v: state.v.iter().map(|x| 2.0 * x).collect(),
            t: 0.0,
        };
        assert!((energy(&model, &doubled) - 4.0 * e).abs() < 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn amplitude_sq_of_a_pure_tone_is_constant() {
        let state = FieldState::<f64> {
            u: vec![0.6, -0.3],
            v: vec![2.0 * 0.8, 2.0 * 0.95393920141694566],
            t: 0.0,
        };
        let d = amplitude_sq(&state, 2.0);
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!((d[1] - 1.0).abs() < 1e-3);
        let zero = FieldState::zeros(2);
        assert!(amplitude_sq(&zero, 2.0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn real_input_spectrum_has_mirror_peaks() {
        let spec = LatticeSpec::<f64>::chain(64);
        let k0 = 2.0 * std::f64::consts::PI * 8.0 / 64.0;
        let values: Vec<Cplx<f64>> = (0..128)
            .map(|i| {
                let m = (i / 2) as f64;
                let g = (-(m - 32.0) * (m - 32.0) / 50.0).exp();
                Cplx::new(g * (k0 * m).cos(), 0.0)
            })
            .collect();
        let spectrum = spatial_spectrum(&spec, &values);
        let plus = spectrum.mag[8];
        let minus = spectrum.mag[64 - 8];
        assert!((plus - 1.0).abs() < 1e-9 || (minus - 1.0).abs() < 1e-9);
        assert!((plus - minus).abs() < 1e-9);
    }

    #[test]
    fn packet_spectrum_peaks_at_the_carrier() {
        let spec = LatticeSpec::<f64>::chain(256);
        let field = PotentialField::zero(&spec);
        let model = build_lattice(&spec, &field).unwrap();
        let k0 = -0.5;
        let wp = WavepacketSpec {
            center: (128.0, 0.0),
            sigma: 12.0,
            k0: (k0, 0.0),
            branch: Branch::Slow,
            amplitude: 1.0,
        };
        let (state, report) = init_wavepacket_classical(&model, &wp).unwrap();
        let envelope = complex_envelope(&state, report.omega0);
        let spectrum = spatial_spectrum(&spec, &envelope);
        let ((kx, _), _) = spectrum.peak();
        let bin = 2.0 * std::f64::consts::PI / 256.0;
        assert!(
            (kx - k0).abs() < 2.0 * bin,
            "peak {kx} expected near {k0} (bin {bin})"
        );
        // Envelope power approximates the exact complex normalization.
        let total: f64 = amplitude_sq(&state, report.omega0).iter().sum();
        assert!((total - 1.0).abs() < 0.02, "power {total}");
    }

    #[test]
    fn near_crossing_branch_rides_the_mode_closest_to_the_crossing() {
        let spec = LatticeSpec::<f64>::chain(512);
        let field = PotentialField::uniform(&spec, 2.0, 0.0).unwrap();
        let model = build_lattice(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: (256.0, 0.0),
            sigma: 20.0,
            k0: (2.5526, 0.0),
            branch: Branch::NearCrossing,
            amplitude: 1.0,
        };
        let (_, report) = init_wavepacket_classical(&model, &wp).unwrap();
        assert!((report.omega0 - 2.025).abs() < 1e-3, "omega0 {}", report.omega0);
        assert!(
            (report.group_velocity.0 + 0.916).abs() < 0.01,
            "vg {}",
            report.group_velocity.0
        );
    }

    #[test]
    fn centroid_tracks_density() {
        let spec = LatticeSpec::<f64>::grid(5, 4);
        let mut density = vec![0.0; spec.n_sites()];
        density[spec.site_index(1, 2, crate::lattice::Sublattice::A)] = 3.0;
        density[spec.site_index(4, 0, crate::lattice::Sublattice::B)] = 1.0;
        let (cx, cy) = centroid(&spec, &density);
        assert!((cx - (3.0 * 1.0 + 4.0) / 4.0).abs() < 1e-15);
        assert!((cy - (3.0 * 2.0) / 4.0).abs() < 1e-15);
        let (mx, _) = centroid_masked(&spec, &density, |m, _| m < 2);
        assert_eq!(mx, 1.0);
    }

    #[test]
    fn evolve_records_strided_trajectory_and_conserves_energy() {
        let spec = LatticeSpec::<f64>::grid(24, 24).with_boundary(Boundary::Periodic);
        let field = PotentialField::uniform(&spec, 0.5, 0.0).unwrap();
        let model = build_lattice(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: (11.5, 11.5),
            sigma: 4.0,
            k0: (0.4, 0.0),
            branch: Branch::Forward,
            amplitude: 1.0,
        };
        let (state, report) = init_wavepacket_classical(&model, &wp).unwrap();
        let params = EvolveParams {
            dt: 0.02,
            t_end: 2.0,
            stride: 25,
            carrier: report.omega0,
        };
        let traj = evolve(&model, state, &params).unwrap();
        assert_eq!(traj.steps, 100);
        assert_eq!(traj.times.len(), 5);
        assert!((traj.times[1] - 0.5).abs() < 1e-12);
        let e0 = traj.energies[0];
        for e in &traj.energies {
            // Uniform tilt conserves energy exactly in continuous time; the
            // residual here is RK4's own O((W dt)^6) dissipation per step.
            assert!((e - e0).abs() < 1e-7 * e0, "drift {}", (e - e0) / e0);
        }
        assert_eq!(traj.snapshots.len(), traj.times.len());
    }

    #[test]
    fn evolve_rejects_oversized_steps() {
        let model = single_cell_model();
        let state = FieldState::zeros(model.n_sites());
        let params = EvolveParams {
            dt: 1.0,
            t_end: 2.0,
            stride: 1,
            carrier: 2.0,
        };
        assert!(matches!(
            evolve(&model, state, &params),
            Err(Error::TimeStepTooLarge { .. })
        ));
    }

    #[test]
    fn zero_amplitude_packet_is_empty_but_reports_the_branch() {
        let spec = LatticeSpec::<f64>::chain(128);
        let field = PotentialField::zero(&spec);
        let model = build_lattice(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: (64.0, 0.0),
            sigma: 8.0,
            k0: (0.3, 0.0),
            branch: Branch::Slow,
            amplitude: 0.0,
        };
        let (state, report) = init_wavepacket_classical(&model, &wp).unwrap();
        assert!(state.u.iter().all(|&x| x == 0.0));
        assert!(report.omega0 > 0.0);
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    }

    #[test]
    fn boundary_proximity_is_warned() {
        let spec = LatticeSpec::<f64>::chain(128);
        let field = PotentialField::zero(&spec);
        let model = build_lattice(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: (10.0, 0.0),
            sigma: 8.0,
            k0: (0.3, 0.0),
            branch: Branch::Slow,
            amplitude: 1.0,
        };
        let (_, report) = init_wavepacket_classical(&model, &wp).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }
}
