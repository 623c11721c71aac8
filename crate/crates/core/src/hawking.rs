//! Horizon tunneling on a chain: a smooth tilt interface separates a flat
//! region from an over-tilted one, a packet launched on the over-tilted side
//! partially escapes to the flat side, and the escaped fraction is compared
//! with the thermal emission formulas.
//!
//! The launch rides the blueshifted segment of the band nearest the
//! branch crossing: inside the over-tilted region that segment still moves
//! toward the horizon while the cone modes are dragged away from it, so the
//! escaping fraction is set by conversion at the horizon rather than by
//! ordinary propagation. The two models drag their packets in opposite
//! directions for a given tilt sign, so the mechanical side runs on the
//! sign-flipped field and both realize the same trapping orientation.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use rayon::prelude::*;

use crate::dynamics::{
    amplitude_sq, evolve_with, init_wavepacket_classical, max_stable_dt, Branch, WavepacketSpec,
};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, bloch_matrices, FieldState, LatticeSpec};
use crate::linalg::vec2_dot;
use crate::potential::PotentialField;
use crate::quantum::{
    band_slopes, build_hamiltonian, init_wavepacket_quantum, quantum_bands,
    schrodinger_evolve_with, QuantumState,
};
use crate::scalar::Real;
use crate::spectra::{crossing_frequency, quadratic_eigensolve, upper_branch_velocities};

/// Which reference model(s) to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichModel {
    Classical,
    Quantum,
    Both,
}

impl WhichModel {
    pub fn classical(self) -> bool {
        self != WhichModel::Quantum
    }

    pub fn quantum(self) -> bool {
        self != WhichModel::Classical
    }
}

/// Chain geometry and launch parameters for one tunneling run.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkingConfig<T: Real> {
    /// Flat cells left of the interface.
    pub n_left: usize,
    /// Interface cells.
    pub n_mid: usize,
    /// Over-tilted cells right of the interface.
    pub n_right: usize,
    /// Interface steepness; the horizon sits mid-interface.
    pub gamma_t: T,
    /// Packet launch center, in cells.
    pub x_0: T,
    /// Packet carrier momentum for the first-order reference side; when
    /// both models run, the mechanical side re-derives its own carrier at
    /// the same frequency label.
    pub k0: T,
    /// Packet width in cells.
    pub sigma: T,
    /// Requested integration step; each side subdivides it into equal
    /// pieces when its own stability bound demands a smaller one.
    pub dt: T,
    /// Hard stop when no plateau is found earlier.
    pub t_end: T,
    pub which: WhichModel,
    /// Instants at which full states are kept.
    pub snapshot_times: Vec<T>,
}

impl<T: Real> HawkingConfig<T> {
    pub fn new() -> Self {
        HawkingConfig {
            n_left: 800,
            n_mid: 400,
            n_right: 800,
            gamma_t: T::lit(0.1),
            x_0: T::lit(1600.0),
            k0: T::lit(2.0606),
            sigma: T::lit(60.0),
            dt: T::lit(0.045),
            t_end: T::lit(2600.0),
            which: WhichModel::Both,
            snapshot_times: Vec::new(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_left + self.n_mid + self.n_right
    }

    /// Horizon position: middle of the interface region.
    pub fn x_h(&self) -> T {
        T::lit(self.n_left as f64) + T::lit(self.n_mid as f64) * T::lit(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_left == 0 || self.n_mid == 0 || self.n_right == 0 {
            return Err(Error::param("regions", "all three regions need cells"));
        }
        if !(self.gamma_t > T::zero()) || !self.gamma_t.is_finite() {
            return Err(Error::param("gamma_t", "tilt rate must be > 0"));
        }
        let right_start = T::lit((self.n_left + self.n_mid) as f64);
        let right_end = T::lit((self.n_cells() - 1) as f64);
        if !(self.x_0 >= right_start && self.x_0 <= right_end) {
            return Err(Error::param(
                "x_0",
                "launch center must sit in the over-tilted region",
            ));
        }
        if !(self.dt > T::zero()) || !(self.t_end > T::zero()) {
            return Err(Error::param("dt/t_end", "must be > 0"));
        }
        Ok(())
    }

    /// Chain spec plus the interface tilt field (classical sign convention).
    pub fn build(&self) -> Result<(LatticeSpec<T>, PotentialField<T>)> {
        self.validate()?;
        let spec = LatticeSpec::chain(self.n_cells());
        let field = PotentialField::tanh_interface(&spec, self.gamma_t, self.x_h())?;
        Ok((spec, field))
    }

    fn left_cells(&self) -> std::ops::Range<usize> {
        0..self.n_left
    }

    fn right_cells(&self) -> std::ops::Range<usize> {
        (self.n_left + self.n_mid)..self.n_cells()
    }
}

impl<T: Real> Default for HawkingConfig<T> {
    fn default() -> Self {
        HawkingConfig::new()
    }
}

/// Thermal emission rate e^(-2 pi omega / gamma_t) and its saturating
/// counterpart 1/(1 + e^(2 pi omega / gamma_t)).
pub fn rates<T: Real>(omega: T, gamma_t: T) -> Result<(T, T)> {
    if !(gamma_t > T::zero()) || !gamma_t.is_finite() {
        return Err(Error::param("gamma_t", "tilt rate must be > 0"));
    }
    let gamma_h = (-T::lit(2.0) * T::PI() * omega / gamma_t).exp();
    let gamma_s = gamma_h / (T::one() + gamma_h);
    Ok((gamma_h, gamma_s))
}

/// Frequency and group velocity of the mechanical branch nearest the
/// crossing point at momentum k under uniform tilt vx.
pub fn classical_carrier_mode<T: Real>(spec: &LatticeSpec<T>, vx: T, k: T) -> Result<(T, T)> {
    let v = (vx, T::zero());
    let kk = (k, T::zero());
    let omega_star = crossing_frequency(spec, (T::zero(), T::zero()))?;
    let modes = quadratic_eigensolve(&bloch_matrices(spec, v, kk))?;
    let near = if (modes[2].omega.re - omega_star).abs() <= (modes[3].omega.re - omega_star).abs()
    {
        modes[2]
    } else {
        modes[3]
    };
    let pairs = upper_branch_velocities(spec, v, kk, (T::one(), T::zero()))?;
    let o0 = vec2_dot(&pairs[0].0.vector, &near.vector).norm();
    let o1 = vec2_dot(&pairs[1].0.vector, &near.vector).norm();
    let velocity = if o0 >= o1 { pairs[0].1 } else { pairs[1].1 };
    Ok((near.omega.re, velocity))
}

/// Energy and group velocity of the quantum band nearest zero at momentum k
/// under uniform tilt vx.
pub fn quantum_carrier_mode<T: Real>(spec: &LatticeSpec<T>, vx: T, k: T) -> (T, T) {
    let v = (vx, T::zero());
    let kk = (k, T::zero());
    let bands = quantum_bands(spec, v, kk);
    let slopes = band_slopes(spec, v, kk, (T::one(), T::zero()));
    if bands[0].abs() <= bands[1].abs() {
        (bands[0], slopes[0])
    } else {
        (bands[1], slopes[1])
    }
}

/// Frequency label of a packet at k0 in the launch region, on the common
/// axis used for rate comparisons. The quantum side reports its carrier
/// energy directly (bands cross at zero). The mechanical cone is half as
/// steep as the quantum one, so its carrier offset from the crossing
/// frequency is doubled onto the same axis.
pub fn omega_of_packet<T: Real>(config: &HawkingConfig<T>, k0: T) -> Result<T> {
    let (spec, field) = config.build()?;
    let launch_cell = (config.x_0.round().as_f64() as usize).min(config.n_cells() - 1);
    let (vx, _) = field.v(launch_cell, 0);
    match config.which {
        WhichModel::Classical => {
            if k0 == T::zero() {
                return Ok(T::zero());
            }
            let omega_star = crossing_frequency(&spec, (T::zero(), T::zero()))?;
            let (omega, _) = classical_carrier_mode(&spec, -vx, k0)?;
            Ok(T::lit(2.0) * (omega - omega_star).abs())
        }
        _ => {
            let (energy, _) = quantum_carrier_mode(&spec, vx, k0);
            Ok(energy.abs())
        }
    }
}

fn bisect<T: Real>(
    mut f: impl FnMut(T) -> Result<T>,
    lo: T,
    hi: T,
    name: &'static str,
) -> Result<T> {
    let mut a = lo;
    let mut b = hi;
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::param(
            name,
            "target frequency is outside the reachable carrier window",
        ));
    }
    for _ in 0..80 {
        let mid = (a + b) * T::lit(0.5);
        let fm = f(mid)?;
        if fm == T::zero() {
            return Ok(mid);
        }
        if (fm > T::zero()) == (fa > T::zero()) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a + b) * T::lit(0.5))
}

/// Carrier momentum whose mechanical near-crossing offset is `delta`,
/// searched on the ingoing blueshifted segment of the branch. The bracket
/// covers offsets up to about 0.29 for the default chain couplings with a
/// plateau tilt of magnitude 2.
pub fn classical_k0_for_offset<T: Real>(
    spec: &LatticeSpec<T>,
    vx: T,
    omega_star: T,
    delta: T,
) -> Result<T> {
    bisect(
        |k| classical_carrier_mode(spec, vx, k).map(|(om, _)| om - omega_star - delta),
        T::lit(2.2),
        T::lit(2.6),
        "omega",
    )
}

/// Carrier momentum whose quantum near-zero band energy is `energy`,
/// searched on the ingoing blueshifted segment of the band. The bracket
/// covers energies up to about 0.26 for the default chain couplings with a
/// plateau tilt of magnitude 2.
pub fn quantum_k0_for_energy<T: Real>(spec: &LatticeSpec<T>, vx: T, energy: T) -> Result<T> {
    bisect(
        |k| Ok(quantum_carrier_mode(spec, vx, k).0 - energy),
        T::lit(1.9),
        T::lit(2.0945),
        "omega",
    )
}

/// One model's escape measurement.
#[derive(Debug, Clone)]
pub struct SideOutcome<T: Real, S> {
    pub k0: T,
    /// Raw frequency offset of this side's carrier from its crossing point.
    pub carrier_offset: T,
    /// Step actually integrated with.
    pub dt: T,
    /// Escaped fraction: final flat-side density over initial launch-side
    /// density.
    pub chi: T,
    pub measure_time: T,
    pub plateau_reached: bool,
    pub snapshots: Vec<(T, S)>,
}

/// Both sides of one tunneling comparison at a common frequency label.
#[derive(Debug, Clone)]
pub struct TunnelingRecord<T: Real> {
    pub omega: T,
    pub gamma_h: T,
    pub gamma_s: T,
    pub classical: Option<SideOutcome<T, FieldState<T>>>,
    pub quantum: Option<SideOutcome<T, QuantumState<T>>>,
}

impl<T: Real> TunnelingRecord<T> {
    pub fn chi_c(&self) -> Option<T> {
        self.classical.as_ref().map(|s| s.chi)
    }

    pub fn chi_q(&self) -> Option<T> {
        self.quantum.as_ref().map(|s| s.chi)
    }
}

const PLATEAU_WINDOW: f64 = 50.0;
const PLATEAU_REL: f64 = 1e-3;
// Escape fractions below this are indistinguishable from the packet's own
// off-branch construction noise (the constant spinor is a first-order
// approximation across the packet's momentum width); such runs measure at
// t_end instead of at a plateau.
const PLATEAU_FLOOR: f64 = 1e-4;
const WALL_CELLS: usize = 5;
const WALL_REL: f64 = 1e-6;
const CHECK_PERIOD: f64 = 5.0;

struct PlateauWatch<T: Real> {
    floor: T,
    history: VecDeque<(T, T)>,
}

impl<T: Real> PlateauWatch<T> {
    fn new(total_initial: T) -> Self {
        PlateauWatch {
            floor: T::lit(PLATEAU_FLOOR) * total_initial,
            history: VecDeque::new(),
        }
    }

    /// Feeds one (time, flat-side norm) sample; true once the norm has been
    /// non-negligible and relatively static over the trailing window.
    fn push(&mut self, t: T, left: T) -> bool {
        self.history.push_back((t, left));
        let horizon = t - T::lit(PLATEAU_WINDOW);
        while self.history.len() > 2 && self.history[1].0 <= horizon {
            self.history.pop_front();
        }
        if left <= self.floor {
            return false;
        }
        let (t0, old) = self.history[0];
        t0 <= horizon && (left - old).abs() < T::lit(PLATEAU_REL) * left
    }
}

fn cell_sum<T: Real>(density: &[T], cells: std::ops::Range<usize>) -> T {
    let mut s = T::zero();
    for c in cells {
        s += density[2 * c] + density[2 * c + 1];
    }
    s
}

/// Escape fraction: final density summed over the flat cells divided by the
/// initial density summed over the launch cells. Densities are per site
/// (two per cell).
pub fn chi<T: Real>(
    final_density: &[T],
    initial_density: &[T],
    left_cells: std::ops::Range<usize>,
    right_cells: std::ops::Range<usize>,
) -> Result<T> {
    let launched = cell_sum(initial_density, right_cells);
    if !(launched > T::zero()) {
        return Err(Error::InvalidRun {
            reason: "initial packet carries no density in the launch region".into(),
        });
    }
    Ok(cell_sum(final_density, left_cells) / launched)
}

struct MeasureState<T: Real, S> {
    watch: PlateauWatch<T>,
    total0: T,
    right0: T,
    snapshot_times: Vec<T>,
    next_snapshot: usize,
    snapshots: Vec<(T, S)>,
    outcome: Option<(T, T, bool)>,
    invalid: Option<String>,
}

impl<T: Real, S: Clone> MeasureState<T, S> {
    fn new(d0: &[T], config: &HawkingConfig<T>) -> Result<Self> {
        let right0 = cell_sum(d0, config.right_cells());
        if !(right0 > T::zero()) {
            return Err(Error::InvalidRun {
                reason: "initial packet carries no density in the launch region".into(),
            });
        }
        let mut snapshot_times = config.snapshot_times.clone();
        snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(MeasureState {
            watch: PlateauWatch::new(d0.iter().copied().sum()),
            total0: d0.iter().copied().sum(),
            right0,
            snapshot_times,
            next_snapshot: 0,
            snapshots: Vec::new(),
            outcome: None,
            invalid: None,
        })
    }

    fn maybe_snapshot(&mut self, t: T, dt: T, state: &S) {
        while self.next_snapshot < self.snapshot_times.len()
            && t >= self.snapshot_times[self.next_snapshot] - dt * T::lit(0.5)
        {
            self.snapshots.push((t, state.clone()));
            self.next_snapshot += 1;
        }
    }

    /// Wall and plateau checks on the current density; Break once measured
    /// or invalidated. A run with pending snapshots keeps integrating after
    /// the measurement froze.
    fn check(&mut self, t: T, density: &[T], config: &HawkingConfig<T>) -> ControlFlow<()> {
        if self.outcome.is_none() {
            let wall = cell_sum(density, 0..WALL_CELLS.min(config.n_left));
            if wall > T::lit(WALL_REL) * self.total0 {
                self.invalid = Some(format!(
                    "density reached the far end of the flat region at t = {t} before the \
                     escape fraction settled"
                ));
                return ControlFlow::Break(());
            }
            let left = cell_sum(density, config.left_cells());
            if self.watch.push(t, left) {
                self.outcome = Some((left / self.right0, t, true));
            }
        }
        if self.outcome.is_some() && self.next_snapshot >= self.snapshot_times.len() {
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    }

    fn finish(self, final_density: &[T], final_t: T, config: &HawkingConfig<T>) -> Result<(T, T, bool, Vec<(T, S)>)> {
        if let Some(reason) = self.invalid {
            return Err(Error::InvalidRun { reason });
        }
        let (chi, t, plateau) = self.outcome.unwrap_or_else(|| {
            (
                cell_sum(final_density, config.left_cells()) / self.right0,
                final_t,
                false,
            )
        });
        if !(chi >= T::zero()) || chi > T::lit(1.05) {
            return Err(Error::InvalidRun {
                reason: format!("escape fraction {chi} outside [0, 1.05]"),
            });
        }
        Ok((chi, t, plateau, self.snapshots))
    }
}

/// Runs the mechanical side at carrier momentum k0. The stored tilt field
/// is sign-flipped for this side so both models trap the same way.
pub fn run_classical_side<T: Real>(
    spec: &LatticeSpec<T>,
    field: &PotentialField<T>,
    config: &HawkingConfig<T>,
    k0: T,
) -> Result<SideOutcome<T, FieldState<T>>> {
    let tilted = field.negated();
    let model = build_lattice(spec, &tilted)?;
    let bound = max_stable_dt(&model)?;
    let sub = (config.dt / bound).as_f64().ceil().max(1.0) as usize;
    let dt = config.dt / T::lit(sub as f64);
    let wp = WavepacketSpec {
        center: (config.x_0, T::zero()),
        sigma: config.sigma,
        k0: (k0, T::zero()),
        branch: Branch::NearCrossing,
        amplitude: T::one(),
    };
    let (mut state, report) = init_wavepacket_classical(&model, &wp)?;
    let carrier = report.omega0;
    let omega_star = crossing_frequency(spec, (T::zero(), T::zero()))?;
    let launch_cell = (config.x_0.round().as_f64() as usize).min(config.n_cells() - 1);
    let (vx, _) = tilted.v(launch_cell, 0);
    let (omega_exact, _) = classical_carrier_mode(spec, vx, k0)?;

    let d0 = amplitude_sq(&state, carrier);
    let mut measure = MeasureState::new(&d0, config)?;
    let check_every = ((T::lit(CHECK_PERIOD) / dt).as_f64().round() as usize).max(1);
    let n_steps = (config.t_end / dt).as_f64().round() as usize;

    evolve_with(&model, &mut state, dt, n_steps, |step, s| {
        measure.maybe_snapshot(s.t, dt, s);
        if step % check_every != 0 {
            return ControlFlow::Continue(());
        }
        let density = amplitude_sq(s, carrier);
        measure.check(s.t, &density, config)
    })?;

    let final_density = amplitude_sq(&state, carrier);
    let (chi, measure_time, plateau_reached, snapshots) =
        measure.finish(&final_density, state.t, config)?;
    Ok(SideOutcome {
        k0,
        carrier_offset: omega_exact - omega_star,
        dt,
        chi,
        measure_time,
        plateau_reached,
        snapshots,
    })
}

/// Runs the first-order reference at carrier momentum k0 on the stored
/// tilt field.
pub fn run_quantum_side<T: Real>(
    spec: &LatticeSpec<T>,
    field: &PotentialField<T>,
    config: &HawkingConfig<T>,
    k0: T,
) -> Result<SideOutcome<T, QuantumState<T>>> {
    let model = build_hamiltonian(spec, field)?;
    let bound = model.max_stable_dt();
    let sub = (config.dt / bound).as_f64().ceil().max(1.0) as usize;
    let dt = config.dt / T::lit(sub as f64);

    let wp = WavepacketSpec {
        center: (config.x_0, T::zero()),
        sigma: config.sigma,
        k0: (k0, T::zero()),
        branch: Branch::NearCrossing,
        amplitude: T::one(),
    };
    let (mut state, report) = init_wavepacket_quantum(&model, &wp)?;

    let d0 = state.density();
    let mut measure = MeasureState::new(&d0, config)?;
    let check_every = ((T::lit(CHECK_PERIOD) / dt).as_f64().round() as usize).max(1);
    let n_steps = (config.t_end / dt).as_f64().round() as usize;

    schrodinger_evolve_with(&model, &mut state, dt, n_steps, |step, s| {
        measure.maybe_snapshot(s.t, dt, s);
        if step % check_every != 0 {
            return ControlFlow::Continue(());
        }
        let density = s.density();
        measure.check(s.t, &density, config)
    })?;

    let final_density = state.density();
    let (chi, measure_time, plateau_reached, snapshots) =
        measure.finish(&final_density, state.t, config)?;
    Ok(SideOutcome {
        k0,
        carrier_offset: report.energy,
        dt,
        chi,
        measure_time,
        plateau_reached,
        snapshots,
    })
}

/// Runs the configured model(s) and labels the record with the packet's
/// frequency offset. When both models run, `k0` addresses the first-order
/// side and the mechanical carrier is re-derived from its own dispersion at
/// half the label, so the two packets sit at the same point of the common
/// rate axis.
pub fn run_tunneling<T: Real>(config: &HawkingConfig<T>) -> Result<TunnelingRecord<T>> {
    let (spec, field) = config.build()?;
    let omega = omega_of_packet(config, config.k0)?;
    let (gamma_h, gamma_s) = rates(omega, config.gamma_t)?;
    let classical = if config.which.classical() {
        let k0 = if config.which.quantum() {
            let launch_cell = (config.x_0.round().as_f64() as usize).min(config.n_cells() - 1);
            let (vx, _) = field.v(launch_cell, 0);
            let omega_star = crossing_frequency(&spec, (T::zero(), T::zero()))?;
            classical_k0_for_offset(&spec, -vx, omega_star, omega * T::lit(0.5))?
        } else {
            config.k0
        };
        Some(run_classical_side(&spec, &field, config, k0)?)
    } else {
        None
    };
    let quantum = if config.which.quantum() {
        Some(run_quantum_side(&spec, &field, config, config.k0)?)
    } else {
        None
    };
    Ok(TunnelingRecord {
        omega,
        gamma_h,
        gamma_s,
        classical,
        quantum,
    })
}

/// Least-squares line through (x, ln y) with a 95% band on the slope.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit<T: Real> {
    pub slope: T,
    pub intercept: T,
    /// Half width of the 95% confidence interval on the slope; zero when
    /// the fit leaves no residual, infinite with fewer than 3 points.
    pub half_width_95: T,
    pub points: usize,
}

fn student_t_95<T: Real>(dof: usize) -> T {
    const TABLE: [f64; 10] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    ];
    if dof == 0 {
        T::infinity()
    } else if dof <= TABLE.len() {
        T::lit(TABLE[dof - 1])
    } else {
        T::lit(1.96)
    }
}

/// Fits ln(chi) = slope * omega + intercept over points with chi > 0.
pub fn fit_log_slope<T: Real>(points: &[(T, T)]) -> Option<SlopeFit<T>> {
    let data: Vec<(T, T)> = points
        .iter()
        .filter(|&&(_, chi)| chi > T::zero())
        .map(|&(om, chi)| (om, chi.ln()))
        .collect();
    let n = data.len();
    if n < 2 {
        return None;
    }
    let nf = T::lit(n as f64);
    let mean_x = data.iter().map(|p| p.0).sum::<T>() / nf;
    let mean_y = data.iter().map(|p| p.1).sum::<T>() / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in &data {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = T::zero();
    for &(x, y) in &data {
        let r = y - (slope * x + intercept);
        ss_res += r * r;
    }
    let half_width_95 = if n > 2 {
        let se = (ss_res / (nf - T::lit(2.0)) / sxx).sqrt();
        student_t_95::<T>(n - 2) * se
    } else {
        T::infinity()
    };
    Some(SlopeFit {
        slope,
        intercept,
        half_width_95,
        points: n,
    })
}

/// A sweep point that could not produce a record.
#[derive(Debug, Clone)]
pub struct SkippedPoint<T: Real> {
    pub omega: T,
    pub reason: String,
}

#[derive(Debug)]
pub struct SweepResult<T: Real> {
    pub records: Vec<TunnelingRecord<T>>,
    pub skipped: Vec<SkippedPoint<T>>,
    pub slope_classical: Option<SlopeFit<T>>,
    pub slope_quantum: Option<SlopeFit<T>>,
}

/// Runs both models across the frequency labels, deriving each side's
/// carrier momentum by inverting its own dispersion (the classical carrier
/// offset is half the label). Failed points are reported and skipped.
pub fn sweep<T: Real>(config: &HawkingConfig<T>, omegas: &[T]) -> Result<SweepResult<T>> {
    config.validate()?;
    let (spec, field) = config.build()?;
    let launch_cell = (config.x_0.round().as_f64() as usize).min(config.n_cells() - 1);
    let (vx, _) = field.v(launch_cell, 0);
    let omega_star = crossing_frequency(&spec, (T::zero(), T::zero()))?;

    let outcomes: Vec<(T, Result<TunnelingRecord<T>>)> = omegas
        .par_iter()
        .map(|&omega| {
            let run = || -> Result<TunnelingRecord<T>> {
                if !(omega > T::zero()) {
                    return Err(Error::param(
                        "omega",
                        "sweep labels must be positive frequencies",
                    ));
                }
                let (gamma_h, gamma_s) = rates(omega, config.gamma_t)?;
                let classical = if config.which.classical() {
                    let k0 = classical_k0_for_offset(
                        &spec,
                        -vx,
                        omega_star,
                        omega * T::lit(0.5),
                    )?;
                    Some(run_classical_side(&spec, &field, config, k0)?)
                } else {
                    None
                };
                let quantum = if config.which.quantum() {
                    let k0 = quantum_k0_for_energy(&spec, vx, omega)?;
                    Some(run_quantum_side(&spec, &field, config, k0)?)
                } else {
                    None
                };
                Ok(TunnelingRecord {
                    omega,
                    gamma_h,
                    gamma_s,
                    classical,
                    quantum,
                })
            };
            (omega, run())
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (omega, outcome) in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(e) => skipped.push(SkippedPoint {
                omega,
                reason: e.to_string(),
            }),
        }
    }
    let classical_points: Vec<(T, T)> = records
        .iter()
        .filter_map(|r| r.chi_c().map(|chi| (r.omega, chi)))
        .collect();
    let quantum_points: Vec<(T, T)> = records
        .iter()
        .filter_map(|r| r.chi_q().map(|chi| (r.omega, chi)))
        .collect();
    Ok(SweepResult {
        slope_classical: fit_log_slope(&classical_points),
        slope_quantum: fit_log_slope(&quantum_points),
        records,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_match_the_closed_forms() {
        let (gh, gs) = rates(0.0, 0.1).unwrap();
        assert_eq!(gh, 1.0);
        assert_eq!(gs, 0.5);
        let (gh, gs) = rates(0.05f64, 0.1).unwrap();
        assert!((gh - (-std::f64::consts::PI).exp()).abs() < 1e-16);
        assert!((gs - gh / (1.0 + gh)).abs() < 1e-16);
        let half_point = 0.1 * std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI);
        let (gh, _) = rates(half_point, 0.1).unwrap();
        assert!((gh - 0.5).abs() < 1e-15);
        let (gh, gs) = rates(1e6, 0.1).unwrap();
        assert_eq!(gh, 0.0);
        assert_eq!(gs, 0.0);
        assert!(rates(0.05, 0.0).is_err());
    }

    #[test]
    fn interface_field_saturates_to_the_stated_plateaus() {
        let config = HawkingConfig::<f64>::new();
        let (_, field) = config.build().unwrap();
        assert_eq!(field.v(0, 0).0, 0.0);
        assert_eq!(field.v(799, 0).0, 0.0);
        assert_eq!(field.v(1200, 0).0, -2.0);
        assert_eq!(field.v(1999, 0).0, -2.0);
        let mid = field.v(1000, 0).0;
        assert!((mid + 1.0).abs() < 1e-12, "horizon tilt {mid}");
    }

    #[test]
    fn config_rejects_bad_geometry() {
        let mut config = HawkingConfig::<f64>::new();
        config.x_0 = 900.0;
        assert!(config.validate().is_err());
        let mut config = HawkingConfig::<f64>::new();
        config.gamma_t = -0.1;
        assert!(config.validate().is_err());
    }

    #[test]
    fn packet_offsets_vanish_at_the_crossing_and_grow_monotonically() {
        let config = HawkingConfig::<f64>::new();
        let quantum_only = HawkingConfig {
            which: WhichModel::Quantum,
            ..config.clone()
        };
        let classical_only = HawkingConfig {
            which: WhichModel::Classical,
            ..config.clone()
        };
        assert_eq!(omega_of_packet(&quantum_only, 0.0).unwrap(), 0.0);
        assert_eq!(omega_of_packet(&classical_only, 0.0).unwrap(), 0.0);
        let mut prev_q = 0.0;
        let mut prev_c = 0.0;
        for i in 1..=6 {
            let k0 = 0.05 * i as f64;
            let oq = omega_of_packet(&quantum_only, k0).unwrap();
            let oc = omega_of_packet(&classical_only, k0).unwrap();
            assert!(oq > prev_q, "quantum offset not monotone at k0 = {k0}");
            assert!(oc > prev_c, "classical offset not monotone at k0 = {k0}");
            prev_q = oq;
            prev_c = oc;
        }
    }

    #[test]
    fn offsets_grow_away_from_the_blueshifted_carrier_points() {
        let config = HawkingConfig::<f64>::new();
        let quantum_only = HawkingConfig {
            which: WhichModel::Quantum,
            ..config.clone()
        };
        let classical_only = HawkingConfig {
            which: WhichModel::Classical,
            ..config.clone()
        };
        let zero_q = 2.0 * std::f64::consts::FRAC_PI_3;
        let mut prev = -1.0;
        for i in 1..=6 {
            let oq = omega_of_packet(&quantum_only, zero_q - 0.03 * i as f64).unwrap();
            assert!(oq > prev, "quantum offset not monotone at step {i}");
            prev = oq;
        }
        assert!(omega_of_packet(&quantum_only, zero_q).unwrap() < 1e-12);
        let mut prev = -1.0;
        for i in 1..=6 {
            let oc = omega_of_packet(&classical_only, 2.5799 - 0.05 * i as f64).unwrap();
            assert!(oc > prev, "classical offset not monotone at step {i}");
            prev = oc;
        }
        assert!(omega_of_packet(&classical_only, 2.5799).unwrap() < 1e-3);
    }

    #[test]
    fn flat_quantum_bands_cross_at_zero_energy() {
        let spec = LatticeSpec::<f64>::chain(64);
        for &k0 in &[-0.2, -0.1, 0.1, 0.2] {
            let (energy, _) = quantum_carrier_mode(&spec, 0.0, k0);
            let root = ((k0 as f64).sin().powi(2) + (1.0 - (k0 as f64).cos()).powi(2)).sqrt();
            assert!((energy.abs() - root).abs() < 1e-12);
        }
    }

    #[test]
    fn carrier_inversion_round_trips() {
        let config = HawkingConfig::<f64>::new();
        let (spec, field) = config.build().unwrap();
        let (vx, _) = field.v(1600, 0);
        assert_eq!(vx, -2.0);
        let omega_star = crossing_frequency(&spec, (0.0, 0.0)).unwrap();

        let delta = 0.025;
        let k0c = classical_k0_for_offset(&spec, -vx, omega_star, delta).unwrap();
        let (om, vel) = classical_carrier_mode(&spec, -vx, k0c).unwrap();
        assert!((om - omega_star - delta).abs() < 1e-12);
        assert!((k0c - 2.5526).abs() < 1e-3, "k0 {k0c}");
        assert!((vel + 0.916).abs() < 0.01, "carrier velocity {vel}");

        let energy = 0.05;
        let k0q = quantum_k0_for_energy(&spec, vx, energy).unwrap();
        let (e, vel) = quantum_carrier_mode(&spec, vx, k0q);
        assert!((e - energy).abs() < 1e-12);
        assert!((k0q - 2.0606).abs() < 1e-3, "k0 {k0q}");
        assert!((vel + 1.457).abs() < 0.01, "carrier velocity {vel}");
    }

    #[test]
    fn escape_fraction_handles_the_limiting_cases() {
        let left = 0..3usize;
        let right = 6..9usize;
        let mut initial = vec![0.0f64; 18];
        initial[12] = 0.7;
        initial[13] = 0.3;
        let zeros = vec![0.0f64; 18];
        assert_eq!(chi(&zeros, &initial, left.clone(), right.clone()).unwrap(), 0.0);
        let mut shifted = vec![0.0f64; 18];
        shifted[0] = 0.7;
        shifted[1] = 0.3;
        assert_eq!(chi(&shifted, &initial, left.clone(), right.clone()).unwrap(), 1.0);
        assert!(chi(&shifted, &zeros, left, right).is_err());
    }

    #[test]
    fn log_slope_fit_recovers_an_exact_line() {
        let slope = -62.83185307179586;
        let points: Vec<(f64, f64)> = (1..=5)
            .map(|i| {
                let omega = 0.015 * i as f64;
                (omega, (slope * omega + 0.3).exp())
            })
            .collect();
        let fit = fit_log_slope(&points).unwrap();
        assert!((fit.slope - slope).abs() < 1e-9);
        assert!((fit.intercept - 0.3).abs() < 1e-9);
        assert!(fit.half_width_95 < 1e-7);
        assert_eq!(fit.points, 5);

        let degenerate = vec![(0.05, 1.0), (0.05, 0.5)];
        assert!(fit_log_slope(&degenerate).is_none());
        assert!(fit_log_slope(&[(0.05, 0.0)]).is_none());
    }

    #[test]
    fn plateau_watch_triggers_only_after_the_window_settles() {
        let mut watch = PlateauWatch::<f64>::new(1.0);
        for i in 0..20 {
            let t = 5.0 * i as f64;
            assert!(!watch.push(t, 1e-15), "floor should gate t = {t}");
        }
        let mut watch = PlateauWatch::<f64>::new(1.0);
        let mut t = 0.0;
        let mut fired = false;
        for i in 0..300 {
            t = 5.0 * i as f64;
            let rising = 0.01 * (1.0 - (-t / 100.0).exp()) + 1e-8;
            if watch.push(t, rising) {
                fired = true;
                break;
            }
        }
        assert!(fired, "saturating curve never plateaued by t = {t}");
        assert!(t > 300.0, "plateau fired too early at t = {t}");
    }
}
