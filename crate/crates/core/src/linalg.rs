//! Dense linear-algebra helpers on top of LAPACK.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use std::os::raw::{c_char, c_int};

pub type C64 = num_complex::Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn to_complex(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|x| x.conj())
}

/// Eigenpairs of a real symmetric matrix, ascending.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Lower).map_err(|e| Error::Linalg(format!("dsyev: {e}")))
}

/// Eigenpairs of a complex Hermitian matrix, ascending.
pub fn eigh_complex(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    a.eigh(UPLO::Lower).map_err(|e| Error::Linalg(format!("zheev: {e}")))
}

/// Eigenpairs of a real symmetric tridiagonal matrix given its diagonal and
/// first off-diagonal, ascending. Eigenvectors are written column-wise into
/// `vectors`, which must be `n x n`.
pub fn eigh_tridiagonal_into(
    diag: &[f64],
    off: &[f64],
    values: &mut [f64],
    vectors: &mut Array2<f64>,
    work: &mut Vec<f64>,
) -> Result<()> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1));
    assert_eq!(vectors.dim(), (n, n));
    values.copy_from_slice(diag);
    let mut e: Vec<f64> = off.to_vec();
    e.push(0.0);
    work.resize((2 * n).saturating_sub(2).max(1), 0.0);
    let jobz = b'V' as c_char;
    let nn = n as c_int;
    let mut info: c_int = 0;
    // Column-major output is the transpose of row-major storage; the matrix
    // of eigenvectors is transposed back below.
    let mut z = vec![0.0; n * n];
    unsafe {
        lapack_sys::dstev_(
            &jobz,
            &nn,
            values.as_mut_ptr(),
            e.as_mut_ptr(),
            z.as_mut_ptr(),
            &nn,
            work.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dstev info = {info}")));
    }
    for col in 0..n {
        for row in 0..n {
            vectors[[row, col]] = z[col * n + row];
        }
    }
    Ok(())
}

/// Complex Schur factorization `A = Z T Z†`. Returns the diagonal of `T`,
/// the Schur vectors `Z` and the largest strictly upper-triangular entry of
/// `T`, which vanishes for normal matrices.
pub fn schur(a: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>, f64)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("schur needs a square matrix".into()));
    }
    // Row-major storage of A^T is column-major storage of A.
    let mut buf: Vec<C64> = a.t().iter().copied().collect();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut vs = vec![C64::new(0.0, 0.0); n * n];
    let mut rwork = vec![0.0f64; n.max(1)];
    let mut bwork = vec![0 as c_int; n.max(1)];
    let jobvs = b'V' as c_char;
    let sort = b'N' as c_char;
    let nn = n as c_int;
    let mut sdim: c_int = 0;
    let mut info: c_int = 0;
    let mut query = C64::new(0.0, 0.0);
    let lwork_query: c_int = -1;
    unsafe {
        lapack_sys::zgees_(
            &jobvs,
            &sort,
            None,
            &nn,
            buf.as_mut_ptr() as *mut _,
            &nn,
            &mut sdim,
            w.as_mut_ptr() as *mut _,
            vs.as_mut_ptr() as *mut _,
            &nn,
            &mut query as *mut C64 as *mut _,
            &lwork_query,
            rwork.as_mut_ptr(),
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zgees workspace query info = {info}")));
    }
    let lwork = (query.re as usize).max(2 * n).max(1);
    let mut work = vec![C64::new(0.0, 0.0); lwork];
    let lw = lwork as c_int;
    unsafe {
        lapack_sys::zgees_(
            &jobvs,
            &sort,
            None,
            &nn,
            buf.as_mut_ptr() as *mut _,
            &nn,
            &mut sdim,
            w.as_mut_ptr() as *mut _,
            vs.as_mut_ptr() as *mut _,
            &nn,
            work.as_mut_ptr() as *mut _,
            &lw,
            rwork.as_mut_ptr(),
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zgees info = {info}")));
    }
    let mut off = 0.0f64;
    for col in 0..n {
        for row in 0..col {
            off = off.max(buf[col * n + row].norm());
        }
    }
    let z = Array2::from_shape_fn((n, n), |(r, c)| vs[c * n + r]);
    Ok((Array1::from(w), z, off))
}

/// `V diag(exp(-i e t)) V†` for a real orthogonal `V`.
pub fn exp_from_real_eig(values: &Array1<f64>, vectors: &Array2<f64>, t: f64) -> Array2<C64> {
    let vc = to_complex(vectors);
    let mut left = vc.clone();
    for (mut col, &e) in left.axis_iter_mut(Axis(1)).zip(values.iter()) {
        let ph = C64::from_polar(1.0, -e * t);
        col.mapv_inplace(|x| x * ph);
    }
    left.dot(&vc.t())
}

/// `V diag(exp(-i e t)) V†` for a unitary `V`.
pub fn exp_from_complex_eig(values: &Array1<f64>, vectors: &Array2<C64>, t: f64) -> Array2<C64> {
    let mut left = vectors.clone();
    for (mut col, &e) in left.axis_iter_mut(Axis(1)).zip(values.iter()) {
        let ph = C64::from_polar(1.0, -e * t);
        col.mapv_inplace(|x| x * ph);
    }
    left.dot(&dagger(vectors))
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    let (e, v) = eigh_complex(h)?;
    Ok(exp_from_complex_eig(&e, &v, t))
}

/// Largest entry of `A† A - 1`.
pub fn unitarity_defect(u: &Array2<C64>) -> f64 {
    gram_deviation(u.view())
}

/// Largest entry of `V† V - 1` for a matrix whose columns should be orthonormal.
pub fn gram_deviation(v: ArrayView2<C64>) -> f64 {
    let g = v.t().mapv(|x| x.conj()).dot(&v);
    let mut worst = 0.0f64;
    for ((r, c), x) in g.indexed_iter() {
        let target = if r == c { 1.0 } else { 0.0 };
        worst = worst.max((x - C64::new(target, 0.0)).norm());
    }
    worst
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(r, c)| {
        a[[r / br, c / bc]] * b[[r % br, c % bc]]
    })
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn max_hermiticity_defect(a: &Array2<C64>) -> f64 {
    let mut worst = 0.0f64;
    for ((r, c), x) in a.indexed_iter() {
        worst = worst.max((x - a[[c, r]].conj()).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        a = &a + &dagger(&a);
        a
    }

    #[test]
    fn schur_of_unitary_is_diagonal_with_unit_eigenvalues() {
        let h = random_hermitian(12, 3);
        let u = expm_hermitian(&h, 0.7).unwrap();
        let (w, z, off) = schur(&u).unwrap();
        assert!(off < 1e-12, "off-diagonal {off}");
        assert!(gram_deviation(z.view()) < 1e-12);
        for x in w.iter() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        let recon = z.dot(&Array2::from_diag(&w)).dot(&dagger(&z));
        let err = (&recon - &u).iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let d = [1.0, -2.0, 0.5, 3.0];
        let o = [0.3, -1.1, 0.7];
        let mut dense = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            dense[[i, i]] = d[i];
        }
        for i in 0..3 {
            dense[[i, i + 1]] = o[i];
            dense[[i + 1, i]] = o[i];
        }
        let (e, _) = eigh_real(&dense).unwrap();
        let mut vals = [0.0; 4];
        let mut vecs = Array2::zeros((4, 4));
        let mut work = Vec::new();
        eigh_tridiagonal_into(&d, &o, &mut vals, &mut vecs, &mut work).unwrap();
        for k in 0..4 {
            assert!((vals[k] - e[k]).abs() < 1e-13);
            let v = vecs.column(k);
            let hv = dense.dot(&v);
            for i in 0..4 {
                assert!((hv[i] - vals[k] * v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_of_pauli_x() {
        let x = array![[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];
        let t = 0.3;
        let u = expm_hermitian(&x, t).unwrap();
        assert!((u[[0, 0]] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[[0, 1]] - C64::new(0.0, -t.sin())).norm() < 1e-14);
    }

    #[test]
    fn kron_dimensions_and_entries() {
        let a = identity(2);
        let b = array![[C64::new(1.0, 0.0), C64::new(2.0, 0.0)], [C64::new(3.0, 0.0), C64::new(4.0, 0.0)]];
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[3, 2]], C64::new(3.0, 0.0));
        assert_eq!(k[[0, 2]], C64::new(0.0, 0.0));
    }
}
