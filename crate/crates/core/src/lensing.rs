//! Wavepacket lensing on a 2D grid: a funnel tilt profile around a central
//! hole, a Gaussian packet launched past it at an impact parameter, centroid
//! tracking with the hole interior masked out, and deflection metrics.
//!
//! The launch line runs along +x, offset by the impact parameter from the
//! hole center, so the packet momentum is perpendicular to the offset and
//! the straight-line path would graze the circle of that radius. The funnel
//! field pulls the trajectory inward; the bending angle between the fitted
//! incoming and outgoing centroid velocities quantifies the deflection.

use std::ops::ControlFlow;

use rayon::prelude::*;

use crate::dynamics::{
    amplitude_sq, centroid_masked, evolve_with, init_wavepacket_classical, max_stable_dt, Branch,
    WavepacketSpec,
};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, FieldState, LatticeSpec};
use crate::potential::PotentialField;
use crate::scalar::Real;

/// Geometry and launch parameters for one lensing run.
#[derive(Debug, Clone, PartialEq)]
pub struct LensingConfig<T: Real> {
    pub nx: usize,
    pub ny: usize,
    /// Hole mass: the tilt magnitude is gamma / r, so the circle r = gamma
    /// marks where the tilt reaches 1 (the horizon).
    pub gamma: T,
    pub center: (T, T),
    /// Launch column, in cells.
    pub launch_x: T,
    /// Impact parameter: perpendicular offset of the launch line from the
    /// hole center.
    pub b: T,
    /// Carrier momentum magnitude along +x.
    pub k0_mag: T,
    /// Packet width in cells.
    pub sigma: T,
    /// Tilt saturation near the core; centroids ignore cells inside the
    /// horizon circle r < gamma, and density there counts as captured.
    pub v_max: T,
    pub dt: T,
    pub t_end: T,
    pub snapshot_times: Vec<T>,
    /// Launch above the center line instead of below it.
    pub mirrored: bool,
}

impl<T: Real> LensingConfig<T> {
    pub fn new() -> Self {
        LensingConfig {
            nx: 200,
            ny: 200,
            gamma: T::lit(20.0),
            center: (T::lit(99.5), T::lit(99.5)),
            launch_x: T::lit(30.0),
            b: T::lit(30.0),
            k0_mag: T::lit(0.3),
            sigma: T::lit(10.0),
            v_max: T::lit(2.0),
            dt: T::lit(0.035),
            t_end: T::lit(200.0),
            snapshot_times: vec![T::lit(50.0), T::lit(110.0), T::lit(200.0)],
            mirrored: false,
        }
    }

    /// Launch point: on the launch line, below the center by `b` (above when
    /// mirrored).
    pub fn launch(&self) -> (T, T) {
        let y = if self.mirrored {
            self.center.1 + self.b
        } else {
            self.center.1 - self.b
        };
        (self.launch_x, y)
    }

    /// Same geometry reflected across the horizontal line through the
    /// center.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.mirrored = !self.mirrored;
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return Err(Error::param("grid", "lensing needs at least 8x8 cells"));
        }
        if !(self.b > T::zero()) {
            return Err(Error::param("b", "impact parameter must be > 0"));
        }
        if !(self.k0_mag > T::zero()) {
            return Err(Error::param("k0", "carrier momentum must be > 0"));
        }
        let (lx, ly) = self.launch();
        let (cx, cy) = self.center;
        let dist = (lx - cx).hypot(ly - cy);
        if dist <= self.gamma {
            return Err(Error::param(
                "launch",
                "launch point must sit outside the horizon circle",
            ));
        }
        if ly < T::zero() || ly > T::lit((self.ny - 1) as f64) {
            return Err(Error::param("b", "launch line leaves the grid"));
        }
        if !(self.dt > T::zero()) || !(self.t_end > T::zero()) {
            return Err(Error::param("dt/t_end", "must be > 0"));
        }
        Ok(())
    }

    /// Grid spec plus the funnel tilt field.
    pub fn build(&self) -> Result<(LatticeSpec<T>, PotentialField<T>)> {
        self.validate()?;
        let spec = LatticeSpec::grid(self.nx, self.ny);
        let field =
            PotentialField::funnel(&spec, self.gamma, self.center, T::lit(2.0), self.v_max)?;
        Ok((spec, field))
    }
}

impl<T: Real> Default for LensingConfig<T> {
    fn default() -> Self {
        LensingConfig::new()
    }
}

/// Centroid history of one run, with the hole interior masked out.
#[derive(Debug, Clone)]
pub struct CentroidTrack<T: Real> {
    pub times: Vec<T>,
    pub centroids: Vec<(T, T)>,
    /// Distance from the masked centroid to the hole center.
    pub radii: Vec<T>,
    /// Fraction of the envelope density inside the hole radius.
    pub captured: Vec<T>,
}

/// Everything one lensing run produces.
#[derive(Debug, Clone)]
pub struct LensingRun<T: Real> {
    pub track: CentroidTrack<T>,
    pub snapshots: Vec<(T, FieldState<T>)>,
    /// Carrier frequency the packet was built at.
    pub omega0: T,
    pub group_velocity: (T, T),
}

/// Deflection summary fitted from a track.
#[derive(Debug, Clone)]
pub struct DeflectionMetrics<T: Real> {
    pub closest_approach: T,
    /// Degrees, positive toward the hole center; `None` when the packet was
    /// captured instead of passing by.
    pub bending_deg: Option<T>,
    pub captured_fraction: T,
}

/// Density-weighted mean position over the cells `keep` allows.
pub fn centroid_in_mask<T: Real>(
    spec: &LatticeSpec<T>,
    density: &[T],
    keep: impl Fn(usize, usize) -> bool,
) -> Result<(T, T)> {
    let mut total = T::zero();
    for (i, &d) in density.iter().enumerate() {
        let site = spec.site_of(i);
        if keep(site.m, site.n) {
            total += d;
        }
    }
    if !(total > T::zero()) {
        return Err(Error::InvalidRun {
            reason: "no density outside the mask".into(),
        });
    }
    Ok(centroid_masked(spec, density, keep))
}

fn window_velocity<T: Real>(times: &[T], values: &[T]) -> T {
    let n = T::lit(times.len() as f64);
    let mt = times.iter().copied().sum::<T>() / n;
    let mv = values.iter().copied().sum::<T>() / n;
    let mut stt = T::zero();
    let mut stv = T::zero();
    for (&t, &v) in times.iter().zip(values) {
        stt += (t - mt) * (t - mt);
        stv += (t - mt) * (v - mv);
    }
    stv / stt
}

/// Runs the funnel experiment and records the centroid track plus the
/// requested snapshots.
pub fn run_lensing<T: Real>(config: &LensingConfig<T>) -> Result<LensingRun<T>> {
    let (spec, field) = config.build()?;
    let model = build_lattice(&spec, &field)?;
    let bound = max_stable_dt(&model)?;
    if config.dt > bound {
        return Err(Error::TimeStepTooLarge {
            dt: config.dt.as_f64(),
            bound: bound.as_f64(),
        });
    }

    let wp = WavepacketSpec {
        center: config.launch(),
        sigma: config.sigma,
        k0: (config.k0_mag, T::zero()),
        branch: Branch::Forward,
        amplitude: T::one(),
    };
    let (mut state, report) = init_wavepacket_classical(&model, &wp)?;
    let carrier = report.omega0;

    let n_steps = (config.t_end / config.dt).as_f64().round() as usize;
    let track_stride = (T::one() / config.dt).as_f64().ceil() as usize;
    let mut snap_steps: Vec<usize> = config
        .snapshot_times
        .iter()
        .map(|&t| (t / config.dt).as_f64().round() as usize)
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let (cx, cy) = config.center;
    let r_hole = config.gamma;
    let hole = |m: usize, n: usize| -> bool {
        if !(r_hole > T::zero()) {
            return false;
        }
        let dx = T::lit(m as f64) - cx;
        let dy = T::lit(n as f64) - cy;
        dx.hypot(dy) < r_hole
    };

    let mut track = CentroidTrack {
        times: Vec::new(),
        centroids: Vec::new(),
        radii: Vec::new(),
        captured: Vec::new(),
    };
    let mut snapshots = Vec::new();
    let mut next_snap = 0usize;
    let mut wall_time: Option<T> = None;
    let mut wall0 = T::zero();
    let mut error: Option<Error> = None;

    let on_ring = |m: usize, n: usize| m < 2 || n < 2 || m >= spec.nx - 2 || n >= spec.ny - 2;

    evolve_with(&model, &mut state, config.dt, n_steps, |step, s| {
        let due_track = step % track_stride == 0 || step == n_steps;
        let due_snap = next_snap < snap_steps.len() && step == snap_steps[next_snap];
        if !(due_track || due_snap) {
            return ControlFlow::Continue(());
        }
        let density = amplitude_sq(s, carrier);
        if due_snap {
            snapshots.push((s.t, s.clone()));
            next_snap += 1;
        }
        if !due_track {
            return ControlFlow::Continue(());
        }
        let mut total = T::zero();
        let mut inside = T::zero();
        let mut ring = T::zero();
        for (i, &d) in density.iter().enumerate() {
            total += d;
            let site = spec.site_of(i);
            if hole(site.m, site.n) {
                inside += d;
            }
            if on_ring(site.m, site.n) {
                ring += d;
            }
        }
        if step == 0 {
            wall0 = ring;
        } else if wall_time.is_none() && ring > (wall0 * T::lit(2.0)).max(total * T::lit(1e-2)) {
            wall_time = Some(s.t);
        }
        match centroid_in_mask(&spec, &density, |m, n| !hole(m, n)) {
            Ok((mx, my)) => {
                track.times.push(s.t);
                track.centroids.push((mx, my));
                track.radii.push((mx - cx).hypot(my - cy));
                track.captured.push(inside / total);
                ControlFlow::Continue(())
            }
            Err(e) => {
                error = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = error {
        return Err(e);
    }

    if let Some(tw) = wall_time {
        let (i_min, _) = track
            .radii
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite radii"))
            .expect("nonempty track");
        if tw <= track.times[i_min] {
            return Err(Error::InvalidRun {
                reason: format!(
                    "packet reached the domain boundary at t = {} before closest approach",
                    tw.as_f64()
                ),
            });
        }
    }

    Ok(LensingRun {
        track,
        snapshots,
        omega0: carrier,
        group_velocity: report.group_velocity,
    })
}

/// Summarizes a track: closest approach, bending angle, and the density
/// fraction the hole absorbed. The bending angle is the cumulative signed
/// turning of the centroid velocity, fitted over consecutive chunks of the
/// track; summing small increments keeps strong deflections (past a half
/// turn) unambiguous where a single in/out angle would wrap. Positive means
/// turning toward the side the hole center lies on. Runs whose capture
/// dominates, or whose centroid ends inside the horizon, report no angle.
pub fn deflection_metrics<T: Real>(
    track: &CentroidTrack<T>,
    config: &LensingConfig<T>,
) -> Result<DeflectionMetrics<T>> {
    let n = track.times.len();
    if n < 8 {
        return Err(Error::InvalidRun {
            reason: format!("track has {n} samples; the velocity fits need at least 8"),
        });
    }
    let closest = track
        .radii
        .iter()
        .copied()
        .fold(T::infinity(), |a, b| a.min(b));
    let captured_fraction = *track.captured.last().expect("nonempty track");
    let final_radius = *track.radii.last().expect("nonempty track");

    let trapped = captured_fraction > T::lit(0.25)
        || (config.gamma > T::zero() && final_radius < config.gamma);
    if trapped {
        return Ok(DeflectionMetrics {
            closest_approach: closest,
            bending_deg: None,
            captured_fraction,
        });
    }

    let w = (n / 12).clamp(3, 25);
    let xs: Vec<T> = track.centroids.iter().map(|c| c.0).collect();
    let ys: Vec<T> = track.centroids.iter().map(|c| c.1).collect();
    let mut headings: Vec<(T, T)> = Vec::new();
    let mut lo = 0;
    while lo + w <= n {
        headings.push((
            window_velocity(&track.times[lo..lo + w], &xs[lo..lo + w]),
            window_velocity(&track.times[lo..lo + w], &ys[lo..lo + w]),
        ));
        lo += w;
    }
    let mut turning = T::zero();
    for pair in headings.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let cross = a.0 * b.1 - a.1 * b.0;
        let dot = a.0 * b.0 + a.1 * b.1;
        turning += cross.atan2(dot);
    }
    let v0 = headings[0];
    let (p0x, p0y) = track.centroids[0];
    let to_center = (config.center.0 - p0x, config.center.1 - p0y);
    let side = v0.0 * to_center.1 - v0.1 * to_center.0;
    let inward = turning * side.signum();

    Ok(DeflectionMetrics {
        closest_approach: closest,
        bending_deg: Some(inward * T::lit(180.0) / T::PI()),
        captured_fraction,
    })
}

/// Runs several configurations, in parallel across runs, preserving order.
pub fn run_many<T: Real>(configs: &[LensingConfig<T>]) -> Result<Vec<LensingRun<T>>> {
    configs.par_iter().map(run_lensing).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_launches_outside_the_horizon() {
        let config = LensingConfig::<f64>::new();
        config.validate().unwrap();
        let (lx, ly) = config.launch();
        assert_eq!((lx, ly), (30.0, 69.5));
        let d = (lx - 99.5f64).hypot(ly - 99.5);
        assert!(d > config.gamma);
    }

    #[test]
    fn mirrored_geometry_reflects_the_launch_line() {
        let config = LensingConfig::<f64>::new();
        let m = config.mirrored();
        assert_eq!(m.launch(), (30.0, 129.5));
        assert_eq!(m.mirrored().launch(), config.launch());
    }

    #[test]
    fn config_rejects_degenerate_geometry() {
        let mut inside = LensingConfig::<f64>::new();
        inside.launch_x = 99.5;
        inside.b = 10.0;
        assert!(inside.validate().is_err());

        let mut off_grid = LensingConfig::<f64>::new();
        off_grid.b = 150.0;
        assert!(off_grid.validate().is_err());

        let mut flat = LensingConfig::<f64>::new();
        flat.k0_mag = 0.0;
        assert!(flat.validate().is_err());
    }

    #[test]
    fn masked_centroid_averages_point_masses() {
        let spec = LatticeSpec::<f64>::grid(16, 16);
        let mut density = vec![0.0; 2 * 16 * 16];
        density[2 * (0 * 16 + 0)] = 1.0;
        density[2 * (10 * 16 + 0)] = 1.0;
        let c = centroid_in_mask(&spec, &density, |_, _| true).unwrap();
        assert!((c.0 - 5.0).abs() < 1e-12 && c.1.abs() < 1e-12);

        let masked = centroid_in_mask(&spec, &density, |m, _| m > 5).unwrap();
        assert!((masked.0 - 10.0).abs() < 1e-12);

        assert!(centroid_in_mask(&spec, &density, |_, _| false).is_err());
    }

    #[test]
    fn initial_packet_centroid_sits_at_the_launch_point() {
        let mut config = LensingConfig::<f64>::new();
        config.nx = 96;
        config.ny = 96;
        config.gamma = 10.0;
        config.center = (47.5, 47.5);
        config.launch_x = 20.0;
        config.b = 18.0;
        config.sigma = 6.0;
        let (spec, field) = config.build().unwrap();
        let model = build_lattice(&spec, &field).unwrap();
        let wp = WavepacketSpec {
            center: config.launch(),
            sigma: config.sigma,
            k0: (config.k0_mag, 0.0),
            branch: Branch::Forward,
            amplitude: 1.0,
        };
        let (state, report) = init_wavepacket_classical(&model, &wp).unwrap();
        let density = amplitude_sq(&state, report.omega0);
        let (mx, my) = crate::dynamics::centroid(&spec, &density);
        assert!(
            (mx - 20.0).abs() < 0.5 && (my - 29.5).abs() < 0.5,
            "centroid ({mx:.2}, {my:.2}) should match the launch point"
        );
    }

    #[test]
    fn early_centroid_acceleration_points_at_the_hole() {
        let mut config = LensingConfig::<f64>::new();
        config.nx = 96;
        config.ny = 96;
        config.gamma = 8.0;
        config.center = (47.5, 47.5);
        config.launch_x = 16.0;
        config.b = 26.0;
        config.sigma = 5.0;
        config.t_end = 36.0;
        config.snapshot_times = vec![];
        let run = run_lensing(&config).unwrap();
        let t = &run.track;
        let n = t.times.len();
        let xs: Vec<f64> = t.centroids.iter().map(|c| c.0).collect();
        let ys: Vec<f64> = t.centroids.iter().map(|c| c.1).collect();
        let vel = |lo: usize, hi: usize| {
            (
                window_velocity(&t.times[lo..hi], &xs[lo..hi]),
                window_velocity(&t.times[lo..hi], &ys[lo..hi]),
            )
        };
        let v0 = vel(0, n / 3);
        let v1 = vel(2 * n / 3, n);
        let acc = (v1.0 - v0.0, v1.1 - v0.1);
        let to_center = (
            config.center.0 - t.centroids[0].0,
            config.center.1 - t.centroids[0].1,
        );
        assert!(
            acc.0 * to_center.0 + acc.1 * to_center.1 > 0.0,
            "acceleration ({:.2e}, {:.2e}) must point toward the hole",
            acc.0,
            acc.1
        );
    }

    #[test]
    fn straight_tracks_report_zero_bending() {
        let config = LensingConfig::<f64>::new();
        let times: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let track = CentroidTrack {
            centroids: times.iter().map(|&t| (10.0 + 0.5 * t, 30.0)).collect(),
            radii: times
                .iter()
                .map(|&t| (10.0 + 0.5 * t - 99.5f64).hypot(30.0 - 99.5))
                .collect(),
            captured: vec![0.0; times.len()],
            times,
        };
        let m = deflection_metrics(&track, &config).unwrap();
        assert!(m.bending_deg.unwrap().abs() < 0.5);
        assert_eq!(m.captured_fraction, 0.0);
    }

    #[test]
    fn captured_tracks_suppress_the_bending_angle() {
        let config = LensingConfig::<f64>::new();
        let times: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let track = CentroidTrack {
            centroids: times.iter().map(|&t| (40.0 + t, 99.5)).collect(),
            radii: times.iter().map(|&t| (59.5f64 - t).abs()).collect(),
            captured: times.iter().map(|&t| (t / 40.0).min(0.6)).collect(),
            times,
        };
        let m = deflection_metrics(&track, &config).unwrap();
        assert!(m.bending_deg.is_none());
        assert!(m.captured_fraction > 0.25);
    }
}
