//! Small dense linear algebra for spatial dimension n ≤ 3.
//!
//! Matrices are stored as `[[f64; 3]; 3]` with only the leading n×n block in
//! use; the closed-form symmetric eigensolves (trigonometric Cardano at
//! n = 3) keep the per-node geometry work allocation-free.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO_VEC: Vec3 = [0.0; 3];
pub const ZERO_MAT: Mat3 = [[0.0; 3]; 3];

pub fn identity(n: usize) -> Mat3 {
    let mut m = ZERO_MAT;
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn dot(n: usize, a: &Vec3, b: &Vec3) -> f64 {
    (0..n).map(|i| a[i] * b[i]).sum()
}

pub fn mat_vec(n: usize, m: &Mat3, v: &Vec3) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..n {
        for j in 0..n {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

pub fn quad_form(n: usize, m: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[i][j] * a[i] * b[j];
        }
    }
    s
}

pub fn det(n: usize, m: &Mat3) -> f64 {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Inverse of a symmetric matrix via cofactors. Returns `None` when the
/// determinant vanishes.
pub fn sym_inverse(n: usize, m: &Mat3) -> Option<Mat3> {
    let d = det(n, m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut inv = ZERO_MAT;
    match n {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[1][1] = m[0][0] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
        }
        3 => {
            inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
            inv[1][0] = inv[0][1];
            inv[2][0] = inv[0][2];
            inv[2][1] = inv[1][2];
        }
        _ => panic!("unsupported dimension {n}"),
    }
    Some(inv)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is non-positive.
pub fn cholesky(n: usize, m: &Mat3) -> Option<Mat3> {
    let mut l = ZERO_MAT;
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves L x = b for lower-triangular L.
pub fn forward_solve(n: usize, l: &Mat3, b: &Vec3) -> Vec3 {
    let mut x = ZERO_VEC;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solves Lᵀ x = b for lower-triangular L.
pub fn backward_solve_t(n: usize, l: &Mat3, b: &Vec3) -> Vec3 {
    let mut x = ZERO_VEC;
    for ii in 0..n {
        let i = n - 1 - ii;
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn normalize(n: usize, v: &mut Vec3) -> f64 {
    let norm = dot(n, v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut().take(n) {
            *x /= norm;
        }
    }
    norm
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns of the
/// returned matrix) of a symmetric n×n matrix, by closed form: trivial at
/// n = 1, a rotation at n = 2, trigonometric Cardano at n = 3.
pub fn sym_eigen(n: usize, a: &Mat3) -> (Vec3, Mat3) {
    match n {
        1 => {
            let mut vecs = ZERO_MAT;
            vecs[0][0] = 1.0;
            ([a[0][0], 0.0, 0.0], vecs)
        }
        2 => sym_eigen2(a),
        3 => sym_eigen3(a),
        _ => panic!("unsupported dimension {n}"),
    }
}

fn sym_eigen2(a: &Mat3) -> (Vec3, Mat3) {
    let (p, q, r) = (a[0][0], a[0][1], a[1][1]);
    let tr = p + r;
    let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let l0 = 0.5 * tr - disc;
    let l1 = 0.5 * tr + disc;
    let mut vecs = ZERO_MAT;
    if disc <= 1e-300 || q == 0.0 {
        // already diagonal
        if p <= r {
            vecs[0][0] = 1.0;
            vecs[1][1] = 1.0;
            return ([p, r, 0.0], vecs);
        }
        vecs[1][0] = 1.0;
        vecs[0][1] = 1.0;
        return ([r, p, 0.0], vecs);
    }
    // eigenvector for l0: (q, l0 - p) or (l0 - r, q), whichever is larger
    let mut v0 = if (l0 - p).abs() > (l0 - r).abs() {
        [q, l0 - p, 0.0]
    } else {
        [l0 - r, q, 0.0]
    };
    normalize(2, &mut v0);
    let v1 = [-v0[1], v0[0], 0.0];
    vecs[0][0] = v0[0];
    vecs[1][0] = v0[1];
    vecs[0][1] = v1[0];
    vecs[1][1] = v1[1];
    ([l0, l1, 0.0], vecs)
}

fn sym_eigen3(a: &Mat3) -> (Vec3, Mat3) {
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let mut p2 = 2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]);
    for i in 0..3 {
        p2 += (a[i][i] - q) * (a[i][i] - q);
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    if p2.sqrt() <= 1e-14 * scale {
        // numerically a multiple of the identity
        return ([a[0][0], a[1][1], a[2][2]], identity(3));
    }
    let p = (p2 / 6.0).sqrt();
    let mut b = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (det(3, &b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l_hi = q + 2.0 * p * phi.cos();
    let l_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l_mid = 3.0 * q - l_hi - l_lo;
    let vals = [l_lo, l_mid, l_hi];

    // the trig formula splits a double eigenvalue by O(sqrt(eps) · scale);
    // inside such a cluster the cross-product method returns one and the
    // same direction, so only well-separated eigenvalues get their own
    // eigenvector and clusters are completed orthogonally
    let cluster_tol = 1e-6 * scale;
    let separated = |idx: usize| -> bool {
        (0..3).all(|j| j == idx || (vals[j] - vals[idx]).abs() > cluster_tol)
    };
    let mut vecs = ZERO_MAT;
    let mut found = [false; 3];
    for (idx, &lam) in vals.iter().enumerate() {
        if !separated(idx) {
            continue;
        }
        if let Some(v) = eigvec3(a, lam, scale) {
            for i in 0..3 {
                vecs[i][idx] = v[i];
            }
            found[idx] = true;
        }
    }
    complete_frame(&mut vecs, &found);
    orthonormalize3(&mut vecs);
    (vals, vecs)
}

fn eigvec3(a: &Mat3, lam: f64, scale: f64) -> Option<Vec3> {
    let mut m = *a;
    for i in 0..3 {
        m[i][i] -= lam;
    }
    let r01 = cross(&m[0], &m[1]);
    let r02 = cross(&m[0], &m[2]);
    let r12 = cross(&m[1], &m[2]);
    let mut best = r01;
    let mut best_norm = dot(3, &r01, &r01);
    for c in [r02, r12] {
        let nn = dot(3, &c, &c);
        if nn > best_norm {
            best = c;
            best_norm = nn;
        }
    }
    if best_norm.sqrt() <= 1e-10 * scale * scale {
        return None;
    }
    let mut v = best;
    normalize(3, &mut v);
    Some(v)
}

fn complete_frame(vecs: &mut Mat3, found: &[bool; 3]) {
    let mut have: Vec<Vec3> = Vec::new();
    for (idx, &f) in found.iter().enumerate() {
        if f {
            have.push([vecs[0][idx], vecs[1][idx], vecs[2][idx]]);
        }
    }
    for idx in 0..3 {
        if found[idx] {
            continue;
        }
        // pick the canonical axis least aligned with the vectors found so far
        let mut best_axis = 0;
        let mut best_score = f64::INFINITY;
        for axis in 0..3 {
            let e = [
                (axis == 0) as i32 as f64,
                (axis == 1) as i32 as f64,
                (axis == 2) as i32 as f64,
            ];
            let score: f64 = have.iter().map(|v| dot(3, v, &e).abs()).sum();
            if score < best_score {
                best_score = score;
                best_axis = axis;
            }
        }
        let mut v = ZERO_VEC;
        v[best_axis] = 1.0;
        for w in &have {
            let c = dot(3, &v, w);
            for i in 0..3 {
                v[i] -= c * w[i];
            }
        }
        normalize(3, &mut v);
        for i in 0..3 {
            vecs[i][idx] = v[i];
        }
        have.push(v);
    }
}

fn orthonormalize3(vecs: &mut Mat3) {
    for col in 0..3 {
        let mut v = [vecs[0][col], vecs[1][col], vecs[2][col]];
        for prev in 0..col {
            let w = [vecs[0][prev], vecs[1][prev], vecs[2][prev]];
            let c = dot(3, &v, &w);
            for i in 0..3 {
                v[i] -= c * w[i];
            }
        }
        if normalize(3, &mut v) < 1e-8 {
            // column collapsed onto the previous ones: rebuild it
            let mut found = [true; 3];
            found[col] = false;
            for i in 0..3 {
                vecs[i][col] = 0.0;
            }
            complete_frame(vecs, &found);
            v = [vecs[0][col], vecs[1][col], vecs[2][col]];
        }
        for i in 0..3 {
            vecs[i][col] = v[i];
        }
    }
}

/// Generalized symmetric eigenproblem det(h - κ g) = 0 for SPD g.
///
/// Whitens with the Cholesky factor of g and solves the symmetric problem in
/// closed form. Returns eigenvalues in ascending order together with the
/// g-orthonormal eigenvectors of the shape operator (columns), i.e. vectors
/// `e_a` with `h e_a = κ_a g e_a` and `e_aᵀ g e_b = δ_ab`.
pub fn generalized_sym_eigen(n: usize, h: &Mat3, g: &Mat3) -> Option<(Vec3, Mat3)> {
    let l = cholesky(n, g)?;
    // w = L⁻¹ h L⁻ᵀ
    let mut w = ZERO_MAT;
    // columns of h L⁻ᵀ: solve Lᵀ for each row of h (symmetric)
    let mut hl = ZERO_MAT; // h L⁻ᵀ
    for i in 0..n {
        let row = [h[i][0], h[i][1], h[i][2]];
        let sol = backward_solve_t_from_row(n, &l, &row);
        hl[i] = sol;
    }
    for j in 0..n {
        let col = [hl[0][j], hl[1][j], hl[2][j]];
        let sol = forward_solve(n, &l, &col);
        for i in 0..n {
            w[i][j] = sol[i];
        }
    }
    // symmetrize against roundoff
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (w[i][j] + w[j][i]);
            w[i][j] = avg;
            w[j][i] = avg;
        }
    }
    let (vals, wvecs) = sym_eigen(n, &w);
    // map back: e_a = L⁻ᵀ w_a
    let mut evecs = ZERO_MAT;
    for a in 0..n {
        let col = [wvecs[0][a], wvecs[1][a], wvecs[2][a]];
        let e = backward_solve_t(n, &l, &col);
        for i in 0..n {
            evecs[i][a] = e[i];
        }
    }
    Some((vals, evecs))
}

/// Eigenvalues only of det(h - κ g) = 0 for SPD g, ascending; skips the
/// eigenvector construction on the flow's hot path.
pub fn generalized_eigenvalues(n: usize, h: &Mat3, g: &Mat3) -> Option<Vec3> {
    if n == 1 {
        if !(g[0][0] > 0.0) {
            return None;
        }
        return Some([h[0][0] / g[0][0], 0.0, 0.0]);
    }
    let l = cholesky(n, g)?;
    let mut hl = ZERO_MAT;
    for i in 0..n {
        let row = [h[i][0], h[i][1], h[i][2]];
        hl[i] = backward_solve_t_from_row(n, &l, &row);
    }
    let mut w = ZERO_MAT;
    for j in 0..n {
        let col = [hl[0][j], hl[1][j], hl[2][j]];
        let sol = forward_solve(n, &l, &col);
        for i in 0..n {
            w[i][j] = sol[i];
        }
    }
    if n == 2 {
        let p = w[0][0];
        let r = w[1][1];
        let q = 0.5 * (w[0][1] + w[1][0]);
        let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        let mid = 0.5 * (p + r);
        return Some([mid - disc, mid + disc, 0.0]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (w[i][j] + w[j][i]);
            w[i][j] = avg;
            w[j][i] = avg;
        }
    }
    Some(sym_eigen3(&w).0)
}

/// Solves x Lᵀ = row, i.e. xᵀ = L⁻¹ rowᵀ read back as a row.
fn backward_solve_t_from_row(n: usize, l: &Mat3, row: &Vec3) -> Vec3 {
    // (h L⁻ᵀ)ᵢⱼ solves Σ_k x_k (Lᵀ)_{kj} = row_j, i.e. L x = rowᵀ column-wise;
    // since Lᵀ is upper triangular, x = row · (Lᵀ)⁻¹ = forward substitution.
    let mut x = ZERO_VEC;
    for j in 0..n {
        let mut s = row[j];
        for k in 0..j {
            s -= x[k] * l[j][k];
        }
        x[j] = s / l[j][j];
    }
    x
}

/// Smallest eigenvalue of a symmetric matrix (helper for time step control).
pub fn sym_min_eigenvalue(n: usize, m: &Mat3) -> f64 {
    sym_eigen(n, m).0[0]
}

/// Fixed-topology pairwise (tree) summation. The reduction tree depends only
/// on the slice length, so results are bit-identical across runs and worker
/// counts.
pub fn tree_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}

/// Tree-summed dot product with the same fixed topology as [`tree_sum`].
pub fn tree_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() <= 8 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        return s;
    }
    let mid = a.len() / 2;
    tree_dot(&a[..mid], &b[..mid]) + tree_dot(&a[mid..], &b[mid..])
}
