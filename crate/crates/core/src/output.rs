//! Bit-stable artifact emission: CSV bodies assembled in memory with fixed
//! float formatting and LF line endings, little-endian binary snapshots, and
//! a sorted-key JSON metadata sidecar.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::Result;
use crate::hawking::TunnelingRecord;
use crate::lattice::{FieldState, LatticeSpec, Sublattice};
use crate::lensing::CentroidTrack;
use crate::potential::PotentialField;
use crate::quantum::QuantumState;
use crate::spectra::SpectrumSample;

/// 17 significant digits; reparses to the identical f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Sweep table: one row per frequency label, the analytical rates alongside
/// the measured escape fractions, a missing side leaving its field empty.
pub fn sweep_csv(records: &[TunnelingRecord<f64>]) -> String {
    let mut out = String::from("omega,chi_c,chi_q,gamma_H,gamma_s\n");
    for r in records {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        push_row(
            &mut out,
            &[
                fmt_f64(r.omega),
                opt(r.chi_c()),
                opt(r.chi_q()),
                fmt_f64(r.gamma_h),
                fmt_f64(r.gamma_s),
            ],
        );
    }
    out
}

/// Band table: four complex pencil frequencies per momentum plus the tilt
/// class.
pub fn band_csv(samples: &[SpectrumSample<f64>]) -> String {
    let mut out = String::from(
        "kx,ky,re_omega_1,re_omega_2,re_omega_3,re_omega_4,\
         im_omega_1,im_omega_2,im_omega_3,im_omega_4,class\n",
    );
    for s in samples {
        let mut fields = vec![fmt_f64(s.k.0), fmt_f64(s.k.1)];
        fields.extend(s.omegas.iter().map(|w| fmt_f64(w.re)));
        fields.extend(s.omegas.iter().map(|w| fmt_f64(w.im)));
        fields.push(s.tilt_class.label().to_string());
        push_row(&mut out, &fields);
    }
    out
}

/// Tilt field table: one row per cell.
pub fn field_csv(field: &PotentialField<f64>) -> String {
    let mut out = String::from("m,n,vx,vy\n");
    for m in 0..field.nx() {
        for n in 0..field.ny() {
            let (vx, vy) = field.v(m, n);
            push_row(
                &mut out,
                &[m.to_string(), n.to_string(), fmt_f64(vx), fmt_f64(vy)],
            );
        }
    }
    out
}

/// Centroid track table: one row per sample.
pub fn track_csv(track: &CentroidTrack<f64>) -> String {
    let mut out = String::from("t,x,y,r,captured\n");
    for i in 0..track.times.len() {
        push_row(
            &mut out,
            &[
                fmt_f64(track.times[i]),
                fmt_f64(track.centroids[i].0),
                fmt_f64(track.centroids[i].1),
                fmt_f64(track.radii[i]),
                fmt_f64(track.captured[i]),
            ],
        );
    }
    out
}

/// Snapshot index table; `measure` is the mechanical energy for classical
/// snapshots and the squared norm for quantum ones.
pub fn snapshot_index_csv(entries: &[(usize, f64, String, f64)]) -> String {
    let mut out = String::from("step,t,file,energy\n");
    for (step, t, file, measure) in entries {
        push_row(
            &mut out,
            &[step.to_string(), fmt_f64(*t), file.clone(), fmt_f64(*measure)],
        );
    }
    out
}

const MAGIC_CLASSICAL: &[u8; 8] = b"WMSNAPC1";
const MAGIC_QUANTUM: &[u8; 8] = b"WMSNAPQ1";

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("truncated snapshot file"));
        }
        let piece = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(piece)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn corrupt(message: &str) -> crate::error::Error {
    std::io::Error::new(ErrorKind::InvalidData, message.to_string()).into()
}

/// Writes a mechanical state: magic, grid shape, time, then one
/// (m, n, sublattice, u, v) record per site in index order.
pub fn write_classical_snapshot(
    path: &Path,
    spec: &LatticeSpec<f64>,
    state: &FieldState<f64>,
) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 28 * state.len());
    buf.extend_from_slice(MAGIC_CLASSICAL);
    buf.extend_from_slice(&(spec.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.ny as u32).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for i in 0..state.len() {
        let site = spec.site_of(i);
        buf.extend_from_slice(&(site.m as u32).to_le_bytes());
        buf.extend_from_slice(&(site.n as u32).to_le_bytes());
        buf.extend_from_slice(&[u8::from(site.sublattice == Sublattice::B)]);
        buf.extend_from_slice(&state.u[i].to_le_bytes());
        buf.extend_from_slice(&state.v[i].to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a mechanical snapshot back; returns the grid shape and the state.
pub fn read_classical_snapshot(path: &Path) -> Result<(usize, usize, FieldState<f64>)> {
    let buf = fs::read(path)?;
    let mut r = ByteReader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC_CLASSICAL {
        return Err(corrupt("not a mechanical snapshot file"));
    }
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let t = r.f64()?;
    let n_sites = 2 * nx * ny;
    let mut state = FieldState::zeros(n_sites);
    state.t = t;
    for i in 0..n_sites {
        r.take(9)?;
        state.u[i] = r.f64()?;
        state.v[i] = r.f64()?;
    }
    Ok((nx, ny, state))
}

/// Writes a first-order-model state: magic, site count, time, then one
/// (site, Re psi, Im psi) record per site.
pub fn write_quantum_snapshot(path: &Path, state: &QuantumState<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 20 * state.psi.len());
    buf.extend_from_slice(MAGIC_QUANTUM);
    buf.extend_from_slice(&(state.psi.len() as u32).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for (i, z) in state.psi.iter().enumerate() {
        buf.extend_from_slice(&(i as u32).to_le_bytes());
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_quantum_snapshot(path: &Path) -> Result<QuantumState<f64>> {
    let buf = fs::read(path)?;
    let mut r = ByteReader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC_QUANTUM {
        return Err(corrupt("not a first-order snapshot file"));
    }
    let n_sites = r.u32()? as usize;
    let mut state = QuantumState::zeros(n_sites);
    state.t = r.f64()?;
    for i in 0..n_sites {
        r.u32()?;
        state.psi[i] = crate::scalar::Cplx::new(r.f64()?, r.f64()?);
    }
    Ok(state)
}

/// Key-value sidecar; serde_json's map keeps keys sorted, so the rendered
/// JSON is deterministic.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    entries: Map<String, Value>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.entries).expect("maps serialize");
        text.push('\n');
        text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawking::{rates, SideOutcome};
    use crate::scalar::Cplx;

    #[test]
    fn sweep_rows_leave_missing_sides_empty() {
        let (gamma_h, gamma_s) = rates(0.05, 0.1).unwrap();
        let record = TunnelingRecord {
            omega: 0.05,
            gamma_h,
            gamma_s,
            classical: None,
            quantum: Some(SideOutcome {
                k0: 2.0606,
                carrier_offset: 0.05,
                dt: 0.0225,
                chi: 0.065,
                measure_time: 800.0,
                plateau_reached: true,
                snapshots: Vec::new(),
            }),
        };
        let body = sweep_csv(&[record]);
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("omega,chi_c,chi_q,gamma_H,gamma_s"));
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert!(fields[1].is_empty());
        assert_eq!(fields[2], fmt_f64(0.065));
        assert!(body.ends_with('\n') && !body.contains('\r'));
    }

    #[test]
    fn classical_snapshots_round_trip_exactly() {
        let spec = LatticeSpec::<f64>::grid(3, 4);
        let mut state = FieldState::zeros(spec.n_sites());
        state.t = 17.25;
        for i in 0..state.len() {
            state.u[i] = (i as f64).sin() * 1e-3;
            state.v[i] = (i as f64).cos() / 7.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        write_classical_snapshot(&path, &spec, &state).unwrap();
        let (nx, ny, back) = read_classical_snapshot(&path).unwrap();
        assert_eq!((nx, ny), (3, 4));
        assert_eq!(back, state);
    }

    #[test]
    fn quantum_snapshots_round_trip_exactly() {
        let mut state = QuantumState::<f64>::zeros(10);
        state.t = 3.5;
        for (i, z) in state.psi.iter_mut().enumerate() {
            *z = Cplx::new((i as f64).sqrt(), -(i as f64) / 3.0);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        write_quantum_snapshot(&path, &state).unwrap();
        let back = read_quantum_snapshot(&path).unwrap();
        assert_eq!(back.t, state.t);
        assert_eq!(back.psi, state.psi);
    }

    #[test]
    fn snapshot_readers_reject_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        fs::write(&path, b"NOTASNAP").unwrap();
        assert!(read_classical_snapshot(&path).is_err());
        assert!(read_quantum_snapshot(&path).is_err());
    }

    #[test]
    fn metadata_renders_keys_sorted() {
        let mut meta = Metadata::new();
        meta.set("zeta", 1.0);
        meta.set("alpha", "first");
        meta.set("mid", 3);
        let text = meta.to_json();
        let a = text.find("alpha").unwrap();
        let m = text.find("mid").unwrap();
        let z = text.find("zeta").unwrap();
        assert!(a < m && m < z, "keys out of order:\n{text}");
    }
}
