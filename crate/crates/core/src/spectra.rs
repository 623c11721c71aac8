//! Band structure of the closed-loop lattice: quadratic pencil solutions,
//! cone slopes and tilt classification, the band-crossing frequency, and
//! whole-zone stability scans.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{bloch_matrices, BlochPencil, Dimensionality, LatticeSpec};
use crate::linalg::{m2_pauli_coeffs, quadratic_eigs, vec2_dot, QuadMode};
use crate::scalar::{Cplx, Real};

/// Relation of the two cone slopes along the tilt direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltClass {
    Untilted,
    Under,
    Critical,
    Over,
}

impl TiltClass {
    pub fn label(self) -> &'static str {
        match self {
            TiltClass::Untilted => "untilted",
            TiltClass::Under => "under",
            TiltClass::Critical => "critical",
            TiltClass::Over => "over",
        }
    }
}

/// Pencil solution at one momentum with branch velocities of the two upper
/// bands.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumSample<T: Real> {
    pub k: (T, T),
    pub omegas: [Cplx<T>; 4],
    /// (dW/dkx, dW/dky) for the two upper branches.
    pub velocities: [(T, T); 2],
    pub tilt_class: TiltClass,
}

/// Finite-difference cone slopes at k = 0 for the two upper branches.
#[derive(Debug, Clone, Copy)]
pub struct ConeParams<T: Real> {
    pub slopes_x: [T; 2],
    pub slopes_y: [T; 2],
    /// Slopes along the tilt direction (x when the tilt vanishes).
    pub along_tilt: [T; 2],
    pub tilt_class: TiltClass,
}

/// Worst-case figures from a uniform k-grid scan.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport<T: Real> {
    pub max_abs_im: T,
    pub min_eig_m0: T,
    pub max_abs_omega: T,
}

/// Solves the pencil of one Bloch matrix pair; four (frequency, polarization)
/// pairs sorted ascending by real part, each with residual at most 1e-9
/// relative to the squared frequency scale.
pub fn quadratic_eigensolve<T: Real>(p: &BlochPencil<T>) -> Result<[QuadMode<T>; 4]> {
    quadratic_eigs(&p.m0, &p.m1)
}

const FD_STEP: f64 = 1e-4;

fn upper_modes<T: Real>(
    spec: &LatticeSpec<T>,
    v: (T, T),
    k: (T, T),
) -> Result<[QuadMode<T>; 2]> {
    let modes = quadratic_eigensolve(&bloch_matrices(spec, v, k))?;
    Ok([modes[2], modes[3]])
}

fn overlap<T: Real>(a: &QuadMode<T>, b: &QuadMode<T>) -> T {
    vec2_dot(&a.vector, &b.vector).norm()
}

/// Velocities of the two upper branches along `dir` by central differences,
/// pairing the +delta and -delta solutions by polarization overlap. Returns
/// the +delta modes as branch labels alongside their velocities.
pub fn upper_branch_velocities<T: Real>(
    spec: &LatticeSpec<T>,
    v: (T, T),
    k: (T, T),
    dir: (T, T),
) -> Result<[(QuadMode<T>, T); 2]> {
    let d = T::lit(FD_STEP);
    let plus = upper_modes(spec, v, (k.0 + d * dir.0, k.1 + d * dir.1))?;
    let minus = upper_modes(spec, v, (k.0 - d * dir.0, k.1 - d * dir.1))?;
    let keep = overlap(&plus[0], &minus[0]) + overlap(&plus[1], &minus[1]);
    let swap = overlap(&plus[0], &minus[1]) + overlap(&plus[1], &minus[0]);
    let order = if keep >= swap { [0, 1] } else { [1, 0] };
    let worst = if keep >= swap {
        overlap(&plus[0], &minus[0]).min(overlap(&plus[1], &minus[1]))
    } else {
        overlap(&plus[0], &minus[1]).min(overlap(&plus[1], &minus[0]))
    };
    if worst < T::lit(std::f64::consts::FRAC_1_SQRT_2) {
        return Err(Error::DegenerateBranch {
            gap: worst.as_f64(),
        });
    }
    let two_d = T::lit(2.0) * d;
    Ok([
        (
            plus[0],
            (plus[0].omega.re - minus[order[0]].omega.re) / two_d,
        ),
        (
            plus[1],
            (plus[1].omega.re - minus[order[1]].omega.re) / two_d,
        ),
    ])
}

fn classify<T: Real>(along_tilt: [T; 2]) -> TiltClass {
    let tol = T::lit(1e-3);
    let [s1, s2] = along_tilt;
    if (s1 + s2).abs() <= tol && s1.abs() > tol && s2.abs() > tol {
        TiltClass::Untilted
    } else if s1.abs().min(s2.abs()) < tol && s1.abs().max(s2.abs()) >= tol {
        TiltClass::Critical
    } else if s1 * s2 > T::zero() {
        TiltClass::Over
    } else {
        TiltClass::Under
    }
}

/// Cone slopes at k = 0 for a uniform tilt, plus the tilt classification
/// along the tilt direction.
pub fn cone_params<T: Real>(spec: &LatticeSpec<T>, v: (T, T)) -> Result<ConeParams<T>> {
    spec.validate()?;
    let origin = (T::zero(), T::zero());
    let x_pairs = upper_branch_velocities(spec, v, origin, (T::one(), T::zero()))?;
    let slopes_x = [x_pairs[0].1, x_pairs[1].1];

    let slopes_y = if spec.dimensionality == Dimensionality::Grid2d {
        let y_pairs = upper_branch_velocities(spec, v, origin, (T::zero(), T::one()))?;
        // Match the y branches to the x branch labels by overlap.
        let keep = overlap(&x_pairs[0].0, &y_pairs[0].0) + overlap(&x_pairs[1].0, &y_pairs[1].0);
        let swap = overlap(&x_pairs[0].0, &y_pairs[1].0) + overlap(&x_pairs[1].0, &y_pairs[0].0);
        if keep >= swap {
            [y_pairs[0].1, y_pairs[1].1]
        } else {
            [y_pairs[1].1, y_pairs[0].1]
        }
    } else {
        [T::zero(); 2]
    };

    let vnorm = v.0.hypot(v.1);
    let along_tilt = if vnorm > T::zero() && spec.dimensionality == Dimensionality::Grid2d {
        let dir = (v.0 / vnorm, v.1 / vnorm);
        let pairs = upper_branch_velocities(spec, v, origin, dir)?;
        [pairs[0].1, pairs[1].1]
    } else {
        slopes_x
    };

    Ok(ConeParams {
        slopes_x,
        slopes_y,
        along_tilt,
        tilt_class: classify(along_tilt),
    })
}

/// Frequency at which the two upper branches touch at k = 0 on a chain.
pub fn crossing_frequency<T: Real>(spec: &LatticeSpec<T>, v: (T, T)) -> Result<T> {
    spec.validate()?;
    if spec.dimensionality != Dimensionality::Chain1d {
        return Err(Error::param("spec", "crossing frequency is a chain quantity"));
    }
    let modes = quadratic_eigensolve(&bloch_matrices(spec, v, (T::zero(), T::zero())))?;
    let (w2, w3) = (modes[2].omega, modes[3].omega);
    let gap = (w3 - w2).norm();
    let scale = w3.norm().max(T::one());
    if gap > T::lit(1e-6) * scale || w2.im.abs() > T::lit(1e-9) * scale {
        return Err(Error::NoCrossing {
            gap: gap.as_f64(),
        });
    }
    Ok((w2.re + w3.re) * T::lit(0.5))
}

/// Solves the pencil over an n-by-n momentum grid (n points on a chain)
/// with k_i = 2 pi i / n, recording the largest |Im W| and the smallest
/// eigenvalue of M0.
pub fn stability_scan<T: Real>(
    spec: &LatticeSpec<T>,
    v: (T, T),
    n: usize,
) -> Result<StabilityReport<T>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::param("n", "grid resolution must be positive"));
    }
    let step = T::lit(2.0) * T::PI() / T::lit(n as f64);
    let ky_count = match spec.dimensionality {
        Dimensionality::Grid2d => n,
        Dimensionality::Chain1d => 1,
    };
    let mut max_abs_im = T::zero();
    let mut min_eig_m0 = T::infinity();
    let mut max_abs_omega = T::zero();
    for i in 0..n {
        for j in 0..ky_count {
            let k = (step * T::lit(i as f64), step * T::lit(j as f64));
            let pencil = bloch_matrices(spec, v, k);
            let (a0, ax, ay, az) = m2_pauli_coeffs(&pencil.m0);
            let eig_low = a0 - (ax * ax + ay * ay + az * az).sqrt();
            if eig_low < min_eig_m0 {
                min_eig_m0 = eig_low;
            }
            for mode in quadratic_eigensolve(&pencil)? {
                let im = mode.omega.im.abs();
                if im > max_abs_im {
                    max_abs_im = im;
                }
                let mag = mode.omega.norm();
                if mag > max_abs_omega {
                    max_abs_omega = mag;
                }
            }
        }
    }
    Ok(StabilityReport {
        max_abs_im,
        min_eig_m0,
        max_abs_omega,
    })
}

/// One spectrum sample per momentum, in path order, solved in parallel.
pub fn band_path<T: Real>(
    spec: &LatticeSpec<T>,
    v: (T, T),
    path: &[(T, T)],
) -> Result<Vec<SpectrumSample<T>>> {
    spec.validate()?;
    let tilt_class = cone_params(spec, v)?.tilt_class;
    path.par_iter()
        .map(|&k| {
            let modes = quadratic_eigensolve(&bloch_matrices(spec, v, k))?;
            let x_pairs = upper_branch_velocities(spec, v, k, (T::one(), T::zero()))?;
            let y_pairs = if spec.dimensionality == Dimensionality::Grid2d {
                Some(upper_branch_velocities(spec, v, k, (T::zero(), T::one()))?)
            } else {
                None
            };
            let mut velocities = [(T::zero(), T::zero()); 2];
            for (slot, center) in [modes[2], modes[3]].iter().enumerate() {
                let pick = |pairs: &[(QuadMode<T>, T); 2]| {
                    if overlap(center, &pairs[0].0) >= overlap(center, &pairs[1].0) {
                        pairs[0].1
                    } else {
                        pairs[1].1
                    }
                };
                let vx = pick(&x_pairs);
                let vy = y_pairs.as_ref().map_or(T::zero(), pick);
                velocities[slot] = (vx, vy);
            }
            Ok(SpectrumSample {
                k,
                omegas: [
                    modes[0].omega,
                    modes[1].omega,
                    modes[2].omega,
                    modes[3].omega,
                ],
                velocities,
                tilt_class,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, LatticeSpec};

    fn grid() -> LatticeSpec<f64> {
        LatticeSpec::grid(16, 16).with_boundary(Boundary::Periodic)
    }

    fn sorted(mut xs: [f64; 2]) -> [f64; 2] {
        if xs[0] > xs[1] {
            xs.swap(0, 1);
        }
        xs
    }

    #[test]
    fn untilted_cone_slopes_are_half_t_x() {
        let p = cone_params(&grid(), (0.0, 0.0)).unwrap();
        let sx = sorted(p.slopes_x);
        assert!((sx[0] + 0.5).abs() < 1e-3);
        assert!((sx[1] - 0.5).abs() < 1e-3);
        assert_eq!(p.tilt_class, TiltClass::Untilted);
        let sy = sorted(p.slopes_y);
        assert!((sy[0] + 0.25).abs() < 1e-3);
        assert!((sy[1] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn critical_tilt_pins_one_branch() {
        let p = cone_params(&grid(), (1.0, 0.0)).unwrap();
        let sx = sorted(p.slopes_x);
        assert!(sx[0].abs() < 1e-3);
        assert!((sx[1] - 1.0).abs() < 1e-3);
        assert_eq!(p.tilt_class, TiltClass::Critical);
    }

    #[test]
    fn over_tilt_drags_both_branches_one_way() {
        let p = cone_params(&grid(), (1.5, 0.0)).unwrap();
        let sx = sorted(p.slopes_x);
        assert!((sx[0] - 0.25).abs() < 1e-3);
        assert!((sx[1] - 1.25).abs() < 1e-3);
        assert_eq!(p.tilt_class, TiltClass::Over);

        let under = cone_params(&grid(), (0.5, 0.0)).unwrap();
        assert_eq!(under.tilt_class, TiltClass::Under);
    }

    #[test]
    fn tilt_classification_follows_the_tilt_direction() {
        let p = cone_params(&grid(), (0.0, 0.5)).unwrap();
        // Along y the cone speed is t_y / (2 W*) = 0.25, so Vy = 0.5 sits
        // exactly at the critical point of the y cone.
        assert_eq!(p.tilt_class, TiltClass::Critical);
    }

    #[test]
    fn crossing_frequency_matches_the_closed_form() {
        let chain = LatticeSpec::<f64>::chain(16);
        assert_eq!(crossing_frequency(&chain, (0.0, 0.0)).unwrap(), 2.0);
        assert_eq!(crossing_frequency(&chain, (-2.0, 0.0)).unwrap(), 2.0);
        let mut scaled = chain;
        scaled.t_z = 4.0;
        scaled.beta = -32.0;
        assert_eq!(crossing_frequency(&scaled, (0.0, 0.0)).unwrap(), 4.0);
        assert!(crossing_frequency(&grid(), (0.0, 0.0)).is_err());
    }

    #[test]
    fn marginal_gain_scan_is_exactly_real() {
        let report = stability_scan(&grid(), (0.0, 0.0), 64).unwrap();
        assert!(report.max_abs_im < 1e-9, "max im {}", report.max_abs_im);
        assert!(report.min_eig_m0 >= -1e-12);
        assert!(report.min_eig_m0 < 1e-12, "margin should be exactly zero");
    }

    #[test]
    fn weaker_self_gain_loses_positivity() {
        let mut spec = grid();
        spec.beta = -6.0;
        let report = stability_scan(&spec, (0.0, 0.0), 64).unwrap();
        assert!(report.min_eig_m0 < 0.0);
        let mut host_only = grid();
        host_only.beta = 0.0;
        let report = stability_scan(&host_only, (0.0, 0.0), 32).unwrap();
        assert!(report.min_eig_m0 < 0.0);
    }

    #[test]
    fn over_tilted_scan_is_recorded_not_asserted() {
        let report = stability_scan(&grid(), (2.0, 0.0), 32).unwrap();
        assert!(report.max_abs_im.is_finite());
    }

    #[test]
    fn band_path_spectrum_negates_under_k_reflection_without_tilt() {
        let spec = grid();
        let ks: Vec<(f64, f64)> = (1..8).map(|i| (0.11 * i as f64, -0.07 * i as f64)).collect();
        let neg: Vec<(f64, f64)> = ks.iter().map(|&(x, y)| (-x, -y)).collect();
        let fwd = band_path(&spec, (0.0, 0.0), &ks).unwrap();
        let bwd = band_path(&spec, (0.0, 0.0), &neg).unwrap();
        for (f, b) in fwd.iter().zip(&bwd) {
            let mut negated: Vec<f64> = b.omegas.iter().map(|w| -w.re).collect();
            negated.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (x, y) in f.omegas.iter().zip(&negated) {
                assert!((x.re - y).abs() < 1e-10);
                assert!(x.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn band_path_velocities_track_the_cone_slopes_near_zero() {
        let spec = grid();
        let samples = band_path(&spec, (1.5, 0.0), &[(0.01, 0.0)]).unwrap();
        let vx = sorted([samples[0].velocities[0].0, samples[0].velocities[1].0]);
        assert!((vx[0] - 0.25).abs() < 0.02);
        assert!((vx[1] - 1.25).abs() < 0.02);
        assert_eq!(samples[0].tilt_class, TiltClass::Over);
    }
}
