//! Experiment dispatch: executes a parsed config on a local thread pool and
//! writes CSV artifacts, binary snapshots, and a JSON metadata sidecar into
//! the output directory. Result files are byte-identical across reruns and
//! thread counts; wall-clock figures go only into the sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::config::{Command, ExperimentConfig};
use crate::dynamics::energy;
use crate::error::{Error, Result};
use crate::hawking::{rates, run_tunneling, sweep, SideOutcome, SlopeFit};
use crate::lattice::{
    bloch_matrices, build_lattice, Boundary, FieldState, LatticeSpec, Sublattice,
};
use crate::lensing::{deflection_metrics, run_lensing};
use crate::output::{
    band_csv, field_csv, fmt_f64, snapshot_index_csv, sweep_csv, track_csv,
    write_classical_snapshot, write_quantum_snapshot, Metadata,
};
use crate::potential::PotentialField;
use crate::quantum::{build_hamiltonian, quantum_bloch, QuantumState};
use crate::scalar::Cplx;
use crate::spectra::{band_path, cone_params, stability_scan};

/// Process-level knobs that are not physics: where artifacts go, how many
/// worker threads the run may use, and how densely row-oriented series are
/// written.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Keep every `stride`-th row of track and band tables.
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: PathBuf::from("out"),
            threads: 1,
            stride: 1,
        }
    }
}

/// One pass/fail line of the validation suite.
#[derive(Debug, Clone)]
pub struct ValidateRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidateReport {
    pub rows: Vec<ValidateRow>,
}

impl ValidateReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    /// Fixed-width table, one line per check.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for row in &self.rows {
            let mark = if row.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{mark}  {name:<width$}  {detail}\n",
                name = row.name,
                detail = row.detail
            ));
        }
        out
    }
}

/// Everything a run leaves behind.
#[derive(Debug)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub validate: Option<ValidateReport>,
}

/// Executes the configured experiment inside a dedicated thread pool sized
/// by `options.threads`.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunArtifacts> {
    config.validate()?;
    if options.stride == 0 {
        return Err(Error::param("stride", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .map_err(|e| Error::param("threads", e.to_string()))?;
    pool.install(|| dispatch(config, options))
}

fn dispatch(config: &ExperimentConfig, options: &RunOptions) -> Result<RunArtifacts> {
    fs::create_dir_all(&options.out_dir)?;
    let start = Instant::now();
    let mut meta = Metadata::new();
    meta.set("version", env!("CARGO_PKG_VERSION"));
    meta.set("command", config.command.label());
    meta.set("threads", options.threads as u64);
    meta.set("stride", options.stride as u64);
    meta.set("config", crate::config::serialize_config(config));

    let mut files = Vec::new();
    let mut validate = None;
    match config.command {
        Command::Spectrum => run_spectrum(config, options, &mut meta, &mut files)?,
        Command::Hawking => run_hawking(config, options, &mut meta, &mut files)?,
        Command::Lens => run_lens(config, options, &mut meta, &mut files)?,
        Command::Sweep => run_sweep(config, options, &mut meta, &mut files)?,
        Command::Validate => {
            let report = validate_suite()?;
            meta.set(
                "checks",
                serde_json::Value::Array(
                    report
                        .rows
                        .iter()
                        .map(|r| json!({"name": r.name, "passed": r.passed, "detail": r.detail}))
                        .collect(),
                ),
            );
            validate = Some(report);
        }
    }

    meta.set("elapsed_seconds", start.elapsed().as_secs_f64());
    let meta_path = options.out_dir.join("metadata.json");
    meta.write(&meta_path)?;
    files.push(meta_path);
    Ok(RunArtifacts { files, validate })
}

fn write_file(dir: &Path, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    files.push(path);
    Ok(())
}

/// Closed loop (0,0) -> (pi,0) -> (pi,pi) -> (0,0) for grids, a plain
/// kx sweep across the zone for chains.
fn momentum_path(two_d: bool, n_k: usize) -> Vec<(f64, f64)> {
    let pi = std::f64::consts::PI;
    let mut path = Vec::new();
    if two_d {
        for i in 0..n_k {
            path.push((pi * i as f64 / n_k as f64, 0.0));
        }
        for i in 0..n_k {
            path.push((pi, pi * i as f64 / n_k as f64));
        }
        for i in 0..=n_k {
            let s = 1.0 - i as f64 / n_k as f64;
            path.push((pi * s, pi * s));
        }
    } else {
        for i in 0..=2 * n_k {
            path.push((-pi + pi * i as f64 / n_k as f64, 0.0));
        }
    }
    path
}

fn run_spectrum(
    config: &ExperimentConfig,
    options: &RunOptions,
    meta: &mut Metadata,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let s = &config.spectrum;
    let spec = if s.ny == 1 {
        LatticeSpec::chain(s.nx)
    } else {
        LatticeSpec::grid(s.nx, s.ny)
    };
    let path = momentum_path(s.ny > 1, s.n_k);
    let samples = band_path(&spec, (s.vx, s.vy), &path)?;
    let kept: Vec<_> = samples
        .iter()
        .step_by(options.stride)
        .cloned()
        .collect();
    meta.set("k_points", kept.len() as u64);
    meta.set("tilt_class", kept[0].tilt_class.label());
    write_file(&options.out_dir, "bands.csv", &band_csv(&kept), files)
}

fn classical_snapshot_files(
    dir: &Path,
    prefix: &str,
    spec: &LatticeSpec<f64>,
    field: &PotentialField<f64>,
    outcome: &SideOutcome<f64, FieldState<f64>>,
    dt: f64,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    if outcome.snapshots.is_empty() {
        return Ok(());
    }
    let model = build_lattice(spec, field)?;
    let mut index = Vec::new();
    for (i, (t, state)) in outcome.snapshots.iter().enumerate() {
        let name = format!("{prefix}_{i:02}.bin");
        let path = dir.join(&name);
        write_classical_snapshot(&path, spec, state)?;
        files.push(path);
        index.push((
            (t / dt).round() as usize,
            *t,
            name,
            energy(&model, state),
        ));
    }
    write_file(
        dir,
        &format!("{prefix}_index.csv"),
        &snapshot_index_csv(&index),
        files,
    )
}

fn quantum_snapshot_files(
    dir: &Path,
    prefix: &str,
    outcome: &SideOutcome<f64, QuantumState<f64>>,
    dt: f64,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    if outcome.snapshots.is_empty() {
        return Ok(());
    }
    let mut index = Vec::new();
    for (i, (t, state)) in outcome.snapshots.iter().enumerate() {
        let name = format!("{prefix}_{i:02}.bin");
        let path = dir.join(&name);
        write_quantum_snapshot(&path, state)?;
        files.push(path);
        let norm = state.norm();
        index.push(((t / dt).round() as usize, *t, name, norm * norm));
    }
    write_file(
        dir,
        &format!("{prefix}_index.csv"),
        &snapshot_index_csv(&index),
        files,
    )
}

fn side_meta(meta: &mut Metadata, label: &str, outcome: &SideOutcome<f64, impl Clone>) {
    meta.set(&format!("{label}_k0"), outcome.k0);
    meta.set(&format!("{label}_carrier_offset"), outcome.carrier_offset);
    meta.set(&format!("{label}_dt"), outcome.dt);
    meta.set(&format!("{label}_chi"), outcome.chi);
    meta.set(&format!("{label}_measure_time"), outcome.measure_time);
    meta.set(&format!("{label}_plateau_reached"), outcome.plateau_reached);
}

fn run_hawking(
    config: &ExperimentConfig,
    options: &RunOptions,
    meta: &mut Metadata,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let record = run_tunneling(&config.hawking)?;
    let (spec, field) = config.hawking.build()?;
    meta.set("omega", record.omega);
    meta.set("gamma_H", record.gamma_h);
    meta.set("gamma_s", record.gamma_s);
    if let Some(c) = &record.classical {
        side_meta(meta, "classical", c);
        classical_snapshot_files(
            &options.out_dir,
            "snap_classical",
            &spec,
            &field.negated(),
            c,
            c.dt,
            files,
        )?;
    }
    if let Some(q) = &record.quantum {
        side_meta(meta, "quantum", q);
        quantum_snapshot_files(&options.out_dir, "snap_quantum", q, q.dt, files)?;
    }
    write_file(&options.out_dir, "hawking.csv", &sweep_csv(&[record]), files)
}

fn run_lens(
    config: &ExperimentConfig,
    options: &RunOptions,
    meta: &mut Metadata,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let lens = &config.lensing;
    let run = run_lensing(lens)?;
    let metrics = deflection_metrics(&run.track, lens)?;
    meta.set("omega0", run.omega0);
    meta.set("group_velocity_x", run.group_velocity.0);
    meta.set("group_velocity_y", run.group_velocity.1);
    meta.set("closest_approach", metrics.closest_approach);
    meta.set("captured_fraction", metrics.captured_fraction);
    match metrics.bending_deg {
        Some(angle) => meta.set("bending_deg", angle),
        None => meta.set("bending_deg", serde_json::Value::Null),
    }

    let (spec, field) = lens.build()?;
    write_file(&options.out_dir, "field.csv", &field_csv(&field), files)?;

    let mut thinned = run.track.clone();
    if options.stride > 1 {
        let keep = |i: usize| i % options.stride == 0;
        thinned.times = keep_every(&run.track.times, keep);
        thinned.centroids = keep_every(&run.track.centroids, keep);
        thinned.radii = keep_every(&run.track.radii, keep);
        thinned.captured = keep_every(&run.track.captured, keep);
    }
    write_file(&options.out_dir, "track.csv", &track_csv(&thinned), files)?;

    if !run.snapshots.is_empty() {
        let model = build_lattice(&spec, &field)?;
        let mut index = Vec::new();
        for (i, (t, state)) in run.snapshots.iter().enumerate() {
            let name = format!("snap_{i:02}.bin");
            let path = options.out_dir.join(&name);
            write_classical_snapshot(&path, &spec, state)?;
            files.push(path);
            index.push((
                (t / lens.dt).round() as usize,
                *t,
                name,
                energy(&model, state),
            ));
        }
        write_file(
            &options.out_dir,
            "snap_index.csv",
            &snapshot_index_csv(&index),
            files,
        )?;
    }
    Ok(())
}

fn keep_every<X: Clone>(xs: &[X], keep: impl Fn(usize) -> bool) -> Vec<X> {
    xs.iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, x)| x.clone())
        .collect()
}

fn slope_meta(meta: &mut Metadata, label: &str, fit: &Option<SlopeFit<f64>>) {
    match fit {
        Some(f) => {
            meta.set(&format!("{label}_slope"), f.slope);
            meta.set(&format!("{label}_intercept"), f.intercept);
            meta.set(&format!("{label}_slope_half_width_95"), f.half_width_95);
            meta.set(&format!("{label}_points"), f.points as u64);
        }
        None => meta.set(&format!("{label}_slope"), serde_json::Value::Null),
    }
}

fn run_sweep(
    config: &ExperimentConfig,
    options: &RunOptions,
    meta: &mut Metadata,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let result = sweep(&config.hawking, &config.sweep_omegas)?;
    slope_meta(meta, "classical", &result.slope_classical);
    slope_meta(meta, "quantum", &result.slope_quantum);
    meta.set(
        "skipped",
        serde_json::Value::Array(
            result
                .skipped
                .iter()
                .map(|s| json!({"omega": s.omega, "reason": s.reason}))
                .collect(),
        ),
    );
    write_file(
        &options.out_dir,
        "sweep.csv",
        &sweep_csv(&result.records),
        files,
    )
}

const BLOCH_GRID: usize = 16;

/// Mean phase-weighted amplitude of `values` against the plane wave at `k`,
/// separated by sublattice.
fn plane_wave_amplitudes(
    spec: &LatticeSpec<f64>,
    k: (f64, f64),
    values: &[Cplx<f64>],
) -> [Cplx<f64>; 2] {
    let mut acc = [Cplx::new(0.0, 0.0); 2];
    for (i, &z) in values.iter().enumerate() {
        let site = spec.site_of(i);
        let phase = k.0 * site.m as f64 + k.1 * site.n as f64;
        let wave = Cplx::new(phase.cos(), phase.sin());
        let slot = usize::from(site.sublattice == Sublattice::B);
        acc[slot] += z * wave.conj();
    }
    let cells = (spec.nx * spec.ny) as f64;
    [acc[0] / cells, acc[1] / cells]
}

fn mat_err(got: &[[Cplx<f64>; 2]; 2], want: &[[Cplx<f64>; 2]; 2]) -> f64 {
    let mut diff = 0.0;
    let mut scale = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            diff += (got[i][j] - want[i][j]).norm_sqr();
            scale += want[i][j].norm_sqr();
        }
    }
    (diff / scale.max(1.0)).sqrt()
}

/// Applies the compiled real-space operators to commensurate plane waves on
/// a periodic grid and compares the recovered 2x2 Bloch blocks with the
/// closed forms; returns the worst relative deviation (classical, quantum)
/// over the tilt and momentum sets.
fn bloch_consistency() -> Result<(f64, f64)> {
    let spec = LatticeSpec::grid(BLOCH_GRID, BLOCH_GRID).with_boundary(Boundary::Periodic);
    let step = 2.0 * std::f64::consts::PI / BLOCH_GRID as f64;
    let mut worst_classical = 0.0f64;
    let mut worst_quantum = 0.0f64;
    for v in [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (2.0, 0.0)] {
        let field = PotentialField::uniform(&spec, v.0, v.1)?;
        let model = build_lattice(&spec, &field)?;
        let quantum = build_hamiltonian(&spec, &field)?;
        for ik in 0..5 {
            for jk in 0..5 {
                let k = (step * (3 * ik) as f64, step * (3 * jk) as f64);
                let pencil = bloch_matrices(&spec, v, k);

                let mut a_u = [[Cplx::new(0.0, 0.0); 2]; 2];
                let mut a_v = [[Cplx::new(0.0, 0.0); 2]; 2];
                let mut h_k = [[Cplx::new(0.0, 0.0); 2]; 2];
                for (col, spinor) in [Sublattice::A, Sublattice::B].iter().enumerate() {
                    let wave: Vec<Cplx<f64>> = (0..spec.n_sites())
                        .map(|i| {
                            let site = spec.site_of(i);
                            if site.sublattice != *spinor {
                                return Cplx::new(0.0, 0.0);
                            }
                            let phase = k.0 * site.m as f64 + k.1 * site.n as f64;
                            Cplx::new(phase.cos(), phase.sin())
                        })
                        .collect();
                    let re: Vec<f64> = wave.iter().map(|z| z.re).collect();
                    let im: Vec<f64> = wave.iter().map(|z| z.im).collect();
                    let zero = vec![0.0; spec.n_sites()];

                    let mut out_re = vec![0.0; spec.n_sites()];
                    let mut out_im = vec![0.0; spec.n_sites()];
                    model.acceleration_into(&re, &zero, &mut out_re);
                    model.acceleration_into(&im, &zero, &mut out_im);
                    let complex: Vec<Cplx<f64>> = out_re
                        .iter()
                        .zip(&out_im)
                        .map(|(&a, &b)| Cplx::new(a, b))
                        .collect();
                    let amps = plane_wave_amplitudes(&spec, k, &complex);
                    a_u[0][col] = amps[0];
                    a_u[1][col] = amps[1];

                    model.acceleration_into(&zero, &re, &mut out_re);
                    model.acceleration_into(&zero, &im, &mut out_im);
                    let complex: Vec<Cplx<f64>> = out_re
                        .iter()
                        .zip(&out_im)
                        .map(|(&a, &b)| Cplx::new(a, b))
                        .collect();
                    let amps = plane_wave_amplitudes(&spec, k, &complex);
                    a_v[0][col] = amps[0];
                    a_v[1][col] = amps[1];

                    let mut h_out = vec![Cplx::new(0.0, 0.0); spec.n_sites()];
                    quantum.apply_into(&wave, &mut h_out);
                    let amps = plane_wave_amplitudes(&spec, k, &h_out);
                    h_k[0][col] = amps[0];
                    h_k[1][col] = amps[1];
                }

                let neg_m0 = map2(&pencil.m0, |z| -z);
                let neg_i_m1 = map2(&pencil.m1, |z| -(Cplx::new(0.0, 1.0) * z));
                worst_classical = worst_classical
                    .max(mat_err(&a_u, &neg_m0))
                    .max(mat_err(&a_v, &neg_i_m1));
                worst_quantum = worst_quantum.max(mat_err(&h_k, &quantum_bloch(&spec, v, k)));
            }
        }
    }
    Ok((worst_classical, worst_quantum))
}

fn map2(
    m: &[[Cplx<f64>; 2]; 2],
    f: impl Fn(Cplx<f64>) -> Cplx<f64>,
) -> [[Cplx<f64>; 2]; 2] {
    let mut out = [[Cplx::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = f(m[i][j]);
        }
    }
    out
}

fn check(rows: &mut Vec<ValidateRow>, name: &str, passed: bool, detail: String) {
    rows.push(ValidateRow {
        name: name.to_string(),
        passed,
        detail,
    });
}

/// Runs the built-in consistency suite: real-space operators against the
/// closed-form Bloch blocks, whole-zone stability at the default and at a
/// weakened self-gain, cone slopes in the three tilt regimes, and the
/// emission-rate identities.
pub fn validate_suite() -> Result<ValidateReport> {
    let mut rows = Vec::new();

    let (classical_err, quantum_err) = bloch_consistency()?;
    check(
        &mut rows,
        "bloch blocks, mechanical operator",
        classical_err <= 1e-10,
        format!("worst relative deviation {classical_err:.3e} (limit 1e-10)"),
    );
    check(
        &mut rows,
        "bloch blocks, first-order operator",
        quantum_err <= 1e-12,
        format!("worst relative deviation {quantum_err:.3e} (limit 1e-12)"),
    );

    let grid = LatticeSpec::<f64>::grid(8, 8);
    let report = stability_scan(&grid, (0.0, 0.0), 64)?;
    check(
        &mut rows,
        "stability at the default self-gain",
        report.max_abs_im < 1e-9 && report.min_eig_m0 >= -1e-12,
        format!(
            "max |Im W| {:.3e}, min eig M0 {:.3e}",
            report.max_abs_im, report.min_eig_m0
        ),
    );
    let mut weak = grid;
    weak.beta = -6.0;
    let report = stability_scan(&weak, (0.0, 0.0), 64)?;
    check(
        &mut rows,
        "weakened self-gain loses positivity",
        report.min_eig_m0 < 0.0,
        format!("min eig M0 {:.3e}", report.min_eig_m0),
    );

    let mut cones_ok = true;
    let mut detail = String::new();
    for (vx, want_lo, want_hi) in [(0.0, -0.5, 0.5), (1.0, 0.0, 1.0), (1.5, 0.25, 1.25)] {
        let p = cone_params(&grid, (vx, 0.0))?;
        let (lo, hi) = if p.along_tilt[0] <= p.along_tilt[1] {
            (p.along_tilt[0], p.along_tilt[1])
        } else {
            (p.along_tilt[1], p.along_tilt[0])
        };
        cones_ok &= (lo - want_lo).abs() < 1e-3 && (hi - want_hi).abs() < 1e-3;
        detail.push_str(&format!("V={vx}: ({lo:.4}, {hi:.4}) "));
    }
    check(&mut rows, "cone slopes across tilt regimes", cones_ok, detail);

    let (h0, s0) = rates(0.0, 0.1)?;
    let (h1, _) = rates(0.05, 0.1)?;
    let rates_ok = h0 == 1.0 && s0 == 0.5 && (h1 - (-std::f64::consts::PI).exp()).abs() < 1e-16;
    check(
        &mut rows,
        "emission rate identities",
        rates_ok,
        format!(
            "rate(0) = {}, saturating(0) = {}, rate(0.05)/e^-pi - 1 = {:.1e}",
            fmt_f64(h0),
            fmt_f64(s0),
            h1 / (-std::f64::consts::PI).exp() - 1.0
        ),
    );

    Ok(ValidateReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn validation_suite_passes() {
        let report = validate_suite().unwrap();
        assert!(report.all_passed(), "\n{}", report.table());
        assert_eq!(report.rows.len(), 6);
        assert!(report.table().lines().count() == 6);
    }

    #[test]
    fn spectrum_run_writes_bands_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config("[run]\ncommand = spectrum\n[spectrum]\nn_k = 8\n").unwrap();
        let options = RunOptions {
            out_dir: dir.path().to_path_buf(),
            threads: 1,
            stride: 1,
        };
        let artifacts = run(&config, &options).unwrap();
        let bands = dir.path().join("bands.csv");
        let meta = dir.path().join("metadata.json");
        assert!(artifacts.files.contains(&bands) && bands.exists());
        assert!(artifacts.files.contains(&meta) && meta.exists());
        let body = fs::read_to_string(&bands).unwrap();
        assert!(body.starts_with("kx,ky,re_omega_1"));
        assert_eq!(body.lines().count(), 1 + 8 + 8 + 9);
    }

    #[test]
    fn reruns_and_thread_counts_give_identical_bodies() {
        let text = "[run]\ncommand = spectrum\n[spectrum]\nnx = 12\nny = 12\nn_k = 6\nvx = 0.7\n";
        let config = parse_config(text).unwrap();
        let mut bodies = Vec::new();
        for threads in [1, 1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let options = RunOptions {
                out_dir: dir.path().to_path_buf(),
                threads,
                stride: 1,
            };
            run(&config, &options).unwrap();
            bodies.push(fs::read(dir.path().join("bands.csv")).unwrap());
        }
        assert_eq!(bodies[0], bodies[1]);
        assert_eq!(bodies[0], bodies[2]);
    }

    #[test]
    fn stride_thins_band_rows() {
        let config = parse_config("[run]\ncommand = spectrum\n[spectrum]\nn_k = 8\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let options = RunOptions {
            out_dir: dir.path().to_path_buf(),
            threads: 1,
            stride: 5,
        };
        run(&config, &options).unwrap();
        let body = fs::read_to_string(dir.path().join("bands.csv")).unwrap();
        assert_eq!(body.lines().count(), 1 + 5);
    }
}
