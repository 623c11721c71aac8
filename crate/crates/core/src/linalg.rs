//! Small dense complex linear algebra: 2x2 helpers, a 4x4 eigensolver, and
//! the quadratic pencil solver used for the closed-loop dispersion.

use crate::error::{Error, Result};
use crate::scalar::{cre, Cplx, Real};

/// 2x2 complex matrix, row major.
pub type Mat2<T> = [[Cplx<T>; 2]; 2];

/// 4x4 complex matrix, row major.
pub type Mat4<T> = [[Cplx<T>; 4]; 4];

/// One root of the quadratic pencil with its polarization vector.
#[derive(Debug, Clone, Copy)]
pub struct QuadMode<T: Real> {
    pub omega: Cplx<T>,
    pub vector: [Cplx<T>; 2],
}

pub fn m2_zero<T: Real>() -> Mat2<T> {
    [[Cplx::default(); 2]; 2]
}

pub fn m2_identity<T: Real>() -> Mat2<T> {
    let mut m = m2_zero();
    m[0][0] = cre(T::one());
    m[1][1] = cre(T::one());
    m
}

/// Builds `c0*I + cx*sx + cy*sy + cz*sz` from real Pauli coefficients.
pub fn m2_from_pauli<T: Real>(c0: T, cx: T, cy: T, cz: T) -> Mat2<T> {
    [
        [Cplx::new(c0 + cz, T::zero()), Cplx::new(cx, -cy)],
        [Cplx::new(cx, cy), Cplx::new(c0 - cz, T::zero())],
    ]
}

pub fn m2_sub<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut out = m2_zero();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j] - b[i][j];
        }
    }
    out
}

pub fn m2_mul<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut out = m2_zero();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn m2_matvec<T: Real>(a: &Mat2<T>, v: &[Cplx<T>; 2]) -> [Cplx<T>; 2] {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

pub fn m2_frobenius<T: Real>(a: &Mat2<T>) -> T {
    let mut s = T::zero();
    for row in a {
        for z in row {
            s += z.norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest entry-wise deviation from `A = A^H`.
pub fn m2_hermitian_deviation<T: Real>(a: &Mat2<T>) -> T {
    let mut dev = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            let d = (a[i][j] - a[j][i].conj()).norm();
            if d > dev {
                dev = d;
            }
        }
    }
    // The diagonal check above compares each diagonal entry with its own
    // conjugate, so imaginary diagonals are covered.
    dev
}

/// Real Pauli coefficients `(c0, cx, cy, cz)` of the Hermitian part of `a`.
pub fn m2_pauli_coeffs<T: Real>(a: &Mat2<T>) -> (T, T, T, T) {
    let half = T::lit(0.5);
    let c0 = (a[0][0].re + a[1][1].re) * half;
    let cz = (a[0][0].re - a[1][1].re) * half;
    let cx = (a[0][1].re + a[1][0].re) * half;
    let cy = (a[1][0].im - a[0][1].im) * half;
    (c0, cx, cy, cz)
}

fn vec2_norm<T: Real>(v: &[Cplx<T>; 2]) -> T {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

/// `<a, b>` with the conjugate on the first argument.
pub fn vec2_dot<T: Real>(a: &[Cplx<T>; 2], b: &[Cplx<T>; 2]) -> Cplx<T> {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

fn vec2_normalize<T: Real>(v: &mut [Cplx<T>; 2]) {
    let n = vec2_norm(v);
    if n > T::zero() {
        let inv = cre(T::one() / n);
        v[0] = v[0] * inv;
        v[1] = v[1] * inv;
    }
}

/// Unit eigenvector of `n . sigma` with eigenvalue `sign` for a unit vector n.
pub fn pauli_spinor<T: Real>(n: (T, T, T), sign: i32) -> [Cplx<T>; 2] {
    let (nx, ny, nz) = n;
    let mut plus = if T::one() + nz > T::lit(1e-3) {
        [Cplx::new(T::one() + nz, T::zero()), Cplx::new(nx, ny)]
    } else {
        [Cplx::new(nx, -ny), Cplx::new(T::one() - nz, T::zero())]
    };
    vec2_normalize(&mut plus);
    if sign >= 0 {
        plus
    } else {
        [-plus[1].conj(), plus[0].conj()]
    }
}

/// Eigenvalues (ascending) and unit eigenvectors of a Hermitian 2x2 matrix.
pub fn eigen_hermitian_2x2<T: Real>(a: &Mat2<T>) -> ([T; 2], [[Cplx<T>; 2]; 2]) {
    let (c0, cx, cy, cz) = m2_pauli_coeffs(a);
    let r = (cx * cx + cy * cy + cz * cz).sqrt();
    if r <= T::epsilon() * (c0.abs() + r + T::one()) {
        let id = [
            [cre(T::one()), Cplx::default()],
            [Cplx::default(), cre(T::one())],
        ];
        return ([c0, c0], [[id[0][0], id[1][0]], [id[0][1], id[1][1]]]);
    }
    let n = (cx / r, cy / r, cz / r);
    let lo = pauli_spinor(n, -1);
    let hi = pauli_spinor(n, 1);
    ([c0 - r, c0 + r], [lo, hi])
}

const QR_MAX_SWEEPS: usize = 40;

fn mat4_frobenius<T: Real>(a: &Mat4<T>) -> T {
    let mut s = T::zero();
    for row in a {
        for z in row {
            s += z.norm_sqr();
        }
    }
    s.sqrt()
}

/// Complex Givens pair (c, s) with |c|^2 + |s|^2 = 1 that maps (a, b) to (r, 0).
fn givens<T: Real>(a: Cplx<T>, b: Cplx<T>) -> (Cplx<T>, Cplx<T>) {
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if r <= T::zero() {
        (cre(T::one()), Cplx::default())
    } else {
        let inv = cre(T::one() / r);
        (a * inv, b * inv)
    }
}

/// Left-multiplies rows (i, j) by the rotation: row_i <- c^* row_i + s^* row_j.
fn rotate_rows<T: Real>(a: &mut Mat4<T>, i: usize, j: usize, c: Cplx<T>, s: Cplx<T>) {
    for col in 0..4 {
        let x = a[i][col];
        let y = a[j][col];
        a[i][col] = c.conj() * x + s.conj() * y;
        a[j][col] = -s * x + c * y;
    }
}

/// Right-multiplies columns (i, j) by the adjoint rotation.
fn rotate_cols<T: Real>(a: &mut Mat4<T>, i: usize, j: usize, c: Cplx<T>, s: Cplx<T>) {
    for row in 0..4 {
        let x = a[row][i];
        let y = a[row][j];
        a[row][i] = c * x + s * y;
        a[row][j] = -s.conj() * x + c.conj() * y;
    }
}

fn hessenberg<T: Real>(a: &mut Mat4<T>) {
    for k in 0..2 {
        for i in (k + 2)..4 {
            if a[i][k].norm_sqr() == T::zero() {
                continue;
            }
            let (c, s) = givens(a[k + 1][k], a[i][k]);
            rotate_rows(a, k + 1, i, c, s);
            rotate_cols(a, k + 1, i, c, s);
            a[i][k] = Cplx::default();
        }
    }
}

fn wilkinson_shift<T: Real>(h: &Mat4<T>, hi: usize) -> Cplx<T> {
    let a = h[hi - 1][hi - 1];
    let b = h[hi - 1][hi];
    let c = h[hi][hi - 1];
    let d = h[hi][hi];
    let half = cre(T::lit(0.5));
    let m = (a + d) * half;
    let disc = ((a - d) * half) * ((a - d) * half) + b * c;
    let root = disc.sqrt();
    let mu1 = m + root;
    let mu2 = m - root;
    if (mu1 - d).norm_sqr() <= (mu2 - d).norm_sqr() {
        mu1
    } else {
        mu2
    }
}

/// Eigenvalues of a 4x4 complex matrix by Hessenberg reduction and shifted QR.
///
/// Returned in no particular order; callers sort as needed.
pub fn eigenvalues_4x4<T: Real>(mut a: Mat4<T>) -> Result<[Cplx<T>; 4]> {
    let scale = mat4_frobenius(&a);
    if scale == T::zero() {
        return Ok([Cplx::default(); 4]);
    }
    hessenberg(&mut a);
    let h = &mut a;
    let eps = T::epsilon();
    let floor = eps * scale;
    let mut out = [Cplx::default(); 4];
    let mut hi = 3usize;
    let mut stalled = 0usize;
    let mut total = 0usize;

    loop {
        // Deflate negligible subdiagonal entries.
        for i in 1..=hi {
            let tol = eps * (h[i - 1][i - 1].norm() + h[i][i].norm()) + floor * eps;
            if h[i][i - 1].norm() <= tol {
                h[i][i - 1] = Cplx::default();
            }
        }
        while hi > 0 && h[hi][hi - 1].norm_sqr() == T::zero() {
            out[hi] = h[hi][hi];
            hi -= 1;
            stalled = 0;
        }
        if hi == 0 {
            out[0] = h[0][0];
            return Ok(out);
        }
        let mut lo = hi;
        while lo > 0 && h[lo][lo - 1].norm_sqr() != T::zero() {
            lo -= 1;
        }

        total += 1;
        stalled += 1;
        if total > QR_MAX_SWEEPS * 4 {
            return Err(Error::EigenConvergence { iterations: total });
        }
        let mu = if stalled % 12 == 0 {
            h[hi][hi] + cre(T::lit(1.5) * h[hi][hi - 1].norm())
        } else {
            wilkinson_shift(h, hi)
        };

        for i in lo..=hi {
            h[i][i] = h[i][i] - mu;
        }
        let mut rots = [(Cplx::<T>::default(), Cplx::<T>::default()); 3];
        let mut nrot = 0;
        for i in lo..hi {
            let (c, s) = givens(h[i][i], h[i + 1][i]);
            rotate_rows(h, i, i + 1, c, s);
            h[i + 1][i] = Cplx::default();
            rots[nrot] = (c, s);
            nrot += 1;
        }
        for (idx, &(c, s)) in rots[..nrot].iter().enumerate() {
            rotate_cols(h, lo + idx, lo + idx + 1, c, s);
        }
        for i in lo..=hi {
            h[i][i] = h[i][i] + mu;
        }
    }
}

/// Companion linearization `[[0, I], [M0, M1]]` of the pencil
/// `W^2 I - W M1 - M0`.
pub fn companion<T: Real>(m0: &Mat2<T>, m1: &Mat2<T>) -> Mat4<T> {
    let mut c = [[Cplx::default(); 4]; 4];
    c[0][2] = cre(T::one());
    c[1][3] = cre(T::one());
    for i in 0..2 {
        for j in 0..2 {
            c[2 + i][j] = m0[i][j];
            c[2 + i][2 + j] = m1[i][j];
        }
    }
    c
}

fn pencil_at<T: Real>(m0: &Mat2<T>, m1: &Mat2<T>, w: Cplx<T>) -> Mat2<T> {
    let mut q = m2_zero();
    let w2 = w * w;
    for i in 0..2 {
        for j in 0..2 {
            q[i][j] = -m0[i][j] - w * m1[i][j];
        }
        q[i][i] = q[i][i] + w2;
    }
    q
}

fn sort_key<T: Real>(w: &Cplx<T>) -> (T, T) {
    (w.re, w.im)
}

fn sort_modes<T: Real>(modes: &mut [QuadMode<T>; 4]) {
    modes.sort_by(|a, b| {
        let (ar, ai) = sort_key(&a.omega);
        let (br, bi) = sort_key(&b.omega);
        ar.partial_cmp(&br)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ai.partial_cmp(&bi).unwrap_or(std::cmp::Ordering::Equal))
    });
}

struct PencilScales<T> {
    omega: T,
    snap: T,
}

fn pencil_scales<T: Real>(m0: &Mat2<T>, m1: &Mat2<T>) -> PencilScales<T> {
    let s0 = m2_frobenius(m0);
    let s1 = m2_frobenius(m1);
    let omega = s0.sqrt().max(s1).max(T::epsilon().sqrt());
    let snap = T::epsilon().powf(T::lit(0.75));
    PencilScales { omega, snap }
}

fn check_hermitian<T: Real>(m: &Mat2<T>, context: &str) -> Result<()> {
    let scale = m2_frobenius(m).max(T::one());
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0)) * scale;
    let dev = m2_hermitian_deviation(m);
    if dev > tol {
        return Err(Error::NotHermitian {
            context: context.to_string(),
            deviation: dev.as_f64(),
        });
    }
    Ok(())
}

fn residual_tol<T: Real>(scales: &PencilScales<T>) -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(1e4)) * scales.omega.powi(2).max(T::one())
}

/// Solves the commuting pencil analytically; returns None when the Hermitian
/// parts do not share an eigenbasis within the snap tolerance.
fn solve_commuting<T: Real>(
    m0: &Mat2<T>,
    m1: &Mat2<T>,
    scales: &PencilScales<T>,
) -> Option<[QuadMode<T>; 4]> {
    let (a0, mut ax, mut ay, mut az) = m2_pauli_coeffs(m0);
    let (b0, mut bx, mut by, mut bz) = m2_pauli_coeffs(m1);
    let an = (ax * ax + ay * ay + az * az).sqrt();
    let bn = (bx * bx + by * by + bz * bz).sqrt();
    let sw = scales.omega;
    if an <= scales.snap * sw * sw {
        ax = T::zero();
        ay = T::zero();
        az = T::zero();
    }
    if bn <= scales.snap * sw {
        bx = T::zero();
        by = T::zero();
        bz = T::zero();
    }
    let an = (ax * ax + ay * ay + az * az).sqrt();
    let bn = (bx * bx + by * by + bz * bz).sqrt();
    if an > T::zero() && bn > T::zero() {
        let cx = ay * bz - az * by;
        let cy = az * bx - ax * bz;
        let cz = ax * by - ay * bx;
        let cross = (cx * cx + cy * cy + cz * cz).sqrt();
        if cross > scales.snap * sw * sw * sw {
            return None;
        }
    }
    let n = if an / (sw * sw) >= bn / sw && an > T::zero() {
        (ax / an, ay / an, az / an)
    } else if bn > T::zero() {
        (bx / bn, by / bn, bz / bn)
    } else {
        (T::zero(), T::zero(), T::one())
    };

    let mut modes = [QuadMode {
        omega: Cplx::default(),
        vector: [Cplx::default(); 2],
    }; 4];
    let mut idx = 0;
    for sign in [1i32, -1i32] {
        let proj_a = ax * n.0 + ay * n.1 + az * n.2;
        let proj_b = bx * n.0 + by * n.1 + bz * n.2;
        let s = T::lit(sign as f64);
        let m0s = a0 + s * proj_a;
        let m1s = b0 + s * proj_b;
        let vector = pauli_spinor(n, sign);
        let disc = m1s * m1s + T::lit(4.0) * m0s;
        let half = T::lit(0.5);
        let (w1, w2) = if disc >= T::zero() {
            let sq = disc.sqrt();
            (
                Cplx::new((m1s - sq) * half, T::zero()),
                Cplx::new((m1s + sq) * half, T::zero()),
            )
        } else {
            let sq = (-disc).sqrt();
            (
                Cplx::new(m1s * half, -sq * half),
                Cplx::new(m1s * half, sq * half),
            )
        };
        for w in [w1, w2] {
            modes[idx] = QuadMode { omega: w, vector };
            idx += 1;
        }
    }
    sort_modes(&mut modes);
    Some(modes)
}

fn solve_general<T: Real>(
    m0: &Mat2<T>,
    m1: &Mat2<T>,
    scales: &PencilScales<T>,
) -> Result<[QuadMode<T>; 4]> {
    let eigs = eigenvalues_4x4(companion(m0, m1))?;
    let res_tol = residual_tol(scales);
    let mut modes = [QuadMode {
        omega: Cplx::default(),
        vector: [Cplx::default(); 2],
    }; 4];
    let mut degenerate_seen = 0usize;
    for (i, &w) in eigs.iter().enumerate() {
        let q = pencil_at(m0, m1, w);
        let col1 = [q[1][1], -q[1][0]];
        let col2 = [-q[0][1], q[0][0]];
        let (n1, n2) = (vec2_norm(&col1), vec2_norm(&col2));
        let qnorm = m2_frobenius(&q);
        let mut vector;
        if n1.max(n2) > scales.snap * scales.omega.powi(2).max(T::one()) {
            vector = if n1 >= n2 { col1 } else { col2 };
            vec2_normalize(&mut vector);
        } else if qnorm <= res_tol {
            // Doubly degenerate root: the pencil vanishes, any basis works.
            vector = [Cplx::default(); 2];
            vector[degenerate_seen.min(1)] = cre(T::one());
            degenerate_seen += 1;
        } else {
            return Err(Error::EigenResidual {
                residual: qnorm.as_f64(),
                tol: res_tol.as_f64(),
            });
        }
        let r = m2_matvec(&q, &vector);
        let rn = vec2_norm(&r);
        if rn > res_tol {
            return Err(Error::EigenResidual {
                residual: rn.as_f64(),
                tol: res_tol.as_f64(),
            });
        }
        modes[i] = QuadMode { omega: w, vector };
    }
    sort_modes(&mut modes);
    Ok(modes)
}

/// Roots and polarization vectors of `det(W^2 I - W M1 - M0) = 0` for a
/// Hermitian pair, sorted ascending by real part (ties by imaginary part).
///
/// Pairs that share an eigenbasis are solved in closed form so that exact
/// degeneracies come out exact; everything else goes through the companion
/// matrix and shifted QR, with a hard residual check on every returned pair.
pub fn quadratic_eigs<T: Real>(m0: &Mat2<T>, m1: &Mat2<T>) -> Result<[QuadMode<T>; 4]> {
    check_hermitian(m0, "pencil M0")?;
    check_hermitian(m1, "pencil M1")?;
    let scales = pencil_scales(m0, m1);
    if let Some(modes) = solve_commuting(m0, m1, &scales) {
        return Ok(modes);
    }
    solve_general(m0, m1, &scales)
}

/// QR-path solver without the commuting shortcut; used to cross-check the
/// closed-form branch in tests.
#[doc(hidden)]
pub fn quadratic_eigs_general<T: Real>(m0: &Mat2<T>, m1: &Mat2<T>) -> Result<[QuadMode<T>; 4]> {
    check_hermitian(m0, "pencil M0")?;
    check_hermitian(m1, "pencil M1")?;
    let scales = pencil_scales(m0, m1);
    solve_general(m0, m1, &scales)
}
