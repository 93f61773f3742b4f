//! Haar-random orthogonal matrices and the row-normalized relaxation.
//!
//! A Haar sample is the Q factor of a Householder QR of a standard Gaussian
//! matrix, with each column multiplied by the sign of the matching diagonal
//! entry of R (Mezzadri's correction; without it Q is not Haar). After the
//! first reflection the trailing columns of a Gaussian matrix are again
//! i.i.d. Gaussian and independent of the reflector, so the k-th reflector
//! is built directly from a fresh Gaussian vector of length `d - k`. This
//! gives the same distribution as factoring a full Gaussian matrix while
//! skipping the `O(d^3)` trailing updates.
//!
//! [`HaarReflectors`] keeps the factored form, which applies to a vector in
//! `O(d^2)`; [`HaarReflectors::to_dense`] accumulates the explicit matrix
//! with blocked (compact WY) updates.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Reflectors accumulated per block in [`HaarReflectors::to_dense`].
const WY_BLOCK: usize = 32;

/// Raw rows below this norm are redrawn by [`RowNormParam::renormalize_with`].
pub const ROW_NORM_FLOOR: f64 = 1e-30;

/// An explicit orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoMatrix {
    entries: Array2<f64>,
}

impl OrthoMatrix {
    /// Wraps a square matrix, checking `|W^T W - I|_max < tol`.
    pub fn from_array(entries: Array2<f64>, tol: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::invalid("orthogonal matrix must be square"));
        }
        let defect = orthogonality_defect(entries.view());
        if !(defect < tol) {
            return Err(Error::invalid(format!(
                "matrix is not orthogonal: defect {defect:e}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// A Haar-distributed orthogonal matrix in factored form
/// `Q = H_0 H_1 ... H_{d-2} S`, where `H_k = I - tau_k v_k v_k^T` acts on
/// coordinates `k..d` and `S` is the diagonal of sign corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarReflectors {
    dim: usize,
    /// `v_k[1..]` for each reflector; the leading 1 is implicit.
    tails: Vec<Vec<f64>>,
    taus: Vec<f64>,
    signs: Vec<f64>,
}

/// Draw a Haar-random reflector sequence of dimension `d`.
pub fn sample_haar_reflectors<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<HaarReflectors> {
    if d == 0 {
        return Err(Error::invalid("orthogonal matrix dimension must be >= 1"));
    }
    let mut tails = Vec::with_capacity(d.saturating_sub(1));
    let mut taus = Vec::with_capacity(d.saturating_sub(1));
    let mut signs = Vec::with_capacity(d);
    let mut column = Vec::with_capacity(d);
    for k in 0..d {
        column.clear();
        column.extend((0..d - k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let alpha = column[0];
        let sigma2: f64 = column[1..].iter().map(|x| x * x).sum();
        // R's diagonal entry is beta (or alpha when no reflection is needed)
        let (beta, tau, tail) = if sigma2 == 0.0 {
            (alpha, 0.0, vec![0.0; column.len() - 1])
        } else {
            let beta = -(alpha * alpha + sigma2).sqrt().copysign(alpha);
            let scale = 1.0 / (alpha - beta);
            let tail = column[1..].iter().map(|x| x * scale).collect();
            (beta, (beta - alpha) / beta, tail)
        };
        signs.push(if beta < 0.0 { -1.0 } else { 1.0 });
        if k + 1 < d {
            tails.push(tail);
            taus.push(tau);
        }
    }
    Ok(HaarReflectors {
        dim: d,
        tails,
        taus,
        signs,
    })
}

/// Draw a Haar-random `d x d` orthogonal matrix.
pub fn sample_haar_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<OrthoMatrix> {
    Ok(sample_haar_reflectors(d, rng)?.to_dense())
}

impl HaarReflectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `x <- H_k x` on coordinates `k..`.
    #[inline]
    fn reflect(&self, k: usize, x: &mut [f64]) {
        let tau = self.taus[k];
        if tau == 0.0 {
            return;
        }
        let tail = &self.tails[k];
        let (head, rest) = x[k..].split_first_mut().expect("k < dim");
        let dot = *head + dot(tail, rest);
        let t = tau * dot;
        *head -= t;
        for (r, v) in rest.iter_mut().zip(tail) {
            *r -= t * v;
        }
    }

    /// `x <- Q x`.
    pub fn apply(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (xi, s) in x.iter_mut().zip(&self.signs) {
            *xi *= s;
        }
        for k in (0..self.taus.len()).rev() {
            self.reflect(k, x);
        }
    }

    /// `x <- Q^T x`.
    pub fn apply_transpose(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for k in 0..self.taus.len() {
            self.reflect(k, x);
        }
        for (xi, s) in x.iter_mut().zip(&self.signs) {
            *xi *= s;
        }
    }

    /// `(V^T, T)` with `H_start ... H_{end-1} = I - V T V^T` on coordinates
    /// `start..`; `V` is unit lower trapezoidal, `T` upper triangular.
    fn wy_block(&self, start: usize, end: usize) -> (Array2<f64>, Array2<f64>) {
        let nb = end - start;
        let m = self.dim - start;
        let mut vt = Array2::<f64>::zeros((nb, m));
        for (j, mut row) in vt.axis_iter_mut(Axis(0)).enumerate() {
            row[j] = 1.0;
            row.slice_mut(s![j + 1..])
                .assign(&ArrayView1::from(&self.tails[start + j][..]));
        }
        let gram = vt.dot(&vt.t());
        let mut t = Array2::<f64>::zeros((nb, nb));
        for j in 0..nb {
            let tau = self.taus[start + j];
            t[[j, j]] = tau;
            if tau == 0.0 {
                continue;
            }
            for i in 0..j {
                let tw: f64 = (i..j).map(|k| t[[i, k]] * gram[[k, j]]).sum();
                t[[i, j]] = -tau * tw;
            }
        }
        (vt, t)
    }

    fn block_starts(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> {
        let n = self.taus.len();
        (0..n)
            .step_by(WY_BLOCK)
            .map(move |s| (s, (s + WY_BLOCK).min(n)))
    }

    /// Explicit matrix via backward blocked accumulation.
    pub fn to_dense(&self) -> OrthoMatrix {
        let mut q = Array2::<f64>::eye(self.dim);
        for (start, end) in self.block_starts().rev() {
            let (vt, t) = self.wy_block(start, end);
            // Q's trailing block is the identity outside rows/cols start..
            let mut block = q.slice_mut(s![start.., start..]);
            let update = vt.t().dot(&t.dot(&vt.dot(&block)));
            block -= &update;
        }
        for (mut col, &s) in q.axis_iter_mut(Axis(1)).zip(&self.signs) {
            if s < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
        OrthoMatrix { entries: q }
    }

    /// `x_s <- Q x_s` for every row of `x`, i.e. `X <- X Q^T`.
    pub fn apply_rows(&self, x: &mut Array2<f64>) {
        debug_assert_eq!(x.ncols(), self.dim);
        for (mut col, &s) in x.axis_iter_mut(Axis(1)).zip(&self.signs) {
            if s < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
        for (start, end) in self.block_starts().rev() {
            let (vt, t) = self.wy_block(start, end);
            let mut xs = x.slice_mut(s![.., start..]);
            let update = xs.dot(&vt.t()).dot(&t.t()).dot(&vt);
            xs -= &update;
        }
    }

    /// `x_s <- Q^T x_s` for every row of `x`, i.e. `X <- X Q`.
    pub fn apply_transpose_rows(&self, x: &mut Array2<f64>) {
        debug_assert_eq!(x.ncols(), self.dim);
        for (start, end) in self.block_starts() {
            let (vt, t) = self.wy_block(start, end);
            let mut xs = x.slice_mut(s![.., start..]);
            let update = xs.dot(&vt.t()).dot(&t).dot(&vt);
            xs -= &update;
        }
        for (mut col, &s) in x.axis_iter_mut(Axis(1)).zip(&self.signs) {
            if s < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `|W^T W - I|_max`.
pub fn orthogonality_defect(w: ArrayView2<'_, f64>) -> f64 {
    let gram = w.t().dot(&w);
    gram.indexed_iter()
        .map(|((i, j), &g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Weight matrix parametrized as `W = diag(1 / |v_i|) V`: every row of the
/// effective matrix has unit norm while `V` is optimized freely.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormParam {
    raw: Array2<f64>,
    weights: Array2<f64>,
    row_norms: Vec<f64>,
}

/// Build the row-normalized view of `raw`.
pub fn row_normalized(raw: Array2<f64>) -> Result<RowNormParam> {
    let mut p = RowNormParam {
        weights: Array2::zeros(raw.raw_dim()),
        row_norms: vec![0.0; raw.nrows()],
        raw,
    };
    p.renormalize()?;
    Ok(p)
}

impl RowNormParam {
    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    /// The effective weight matrix with unit-norm rows.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    /// Mutable access to `V`; call a `renormalize*` method afterwards.
    pub fn raw_mut(&mut self) -> &mut Array2<f64> {
        &mut self.raw
    }

    /// Recompute `W` from `V`, rejecting rows with zero norm.
    pub fn renormalize(&mut self) -> Result<()> {
        for (i, row) in self.raw.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm >= ROW_NORM_FLOOR) {
                return Err(Error::DegenerateRow { row: i });
            }
            self.row_norms[i] = norm;
            let mut out = self.weights.row_mut(i);
            out.assign(&row);
            out /= norm;
        }
        Ok(())
    }

    /// Like [`renormalize`](Self::renormalize), but rows that collapsed below
    /// [`ROW_NORM_FLOOR`] are redrawn from a Gaussian. Returns how many were.
    pub fn renormalize_with<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let mut redrawn = 0;
        for mut row in self.raw.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            if !(norm >= ROW_NORM_FLOOR) {
                row.mapv_inplace(|_| rng.sample(StandardNormal));
                redrawn += 1;
            }
        }
        self.renormalize()
            .expect("rows were redrawn above the floor");
        redrawn
    }

    /// Chain `dE/dW` through the normalization:
    /// `dE/dv_i = (I - w_i w_i^T) dE/dw_i / |v_i|`.
    pub fn raw_gradient(&self, grad_w: &Array2<f64>) -> Array2<f64> {
        let mut out = grad_w.clone();
        for (i, mut g) in out.axis_iter_mut(Axis(0)).enumerate() {
            let w = self.weights.row(i);
            let proj = w.dot(&g);
            g.scaled_add(-proj, &w);
            g /= self.row_norms[i];
        }
        out
    }
}

/// A point uniformly distributed on the sphere of radius `sqrt(d)`.
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&z, &z).sqrt();
        if norm > 0.0 {
            let scale = (d as f64).sqrt() / norm;
            return Ok(z.into_iter().map(|x| x * scale).collect());
        }
    }
}

/// A `rows x cols` matrix with orthonormal rows (if `rows <= cols`) or
/// orthonormal columns, cut from a Haar sample of the larger dimension.
pub fn sample_semi_orthogonal<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let n = rows.max(cols);
    let q = sample_haar_orthogonal(n, rng)?.into_inner();
    Ok(q.slice(s![..rows, ..cols]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use crate::stats::{ks_two_sample, ks_uniform};
    use ndarray::array;
    use ndarray::Array1;

    /// Reference Q: unblocked product of the reflectors applied to e_j.
    fn dense_by_columns(h: &HaarReflectors) -> Array2<f64> {
        let d = h.dim();
        let mut q = Array2::zeros((d, d));
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            h.apply(&mut e);
            for i in 0..d {
                q[[i, j]] = e[i];
            }
        }
        q
    }

    #[test]
    fn batched_application_matches_dense() {
        for d in [1, 2, 31, 33, 70] {
            let mut rng = SeedStream::new(d as u64).derive("haar", 0);
            let h = sample_haar_reflectors(d, &mut rng).unwrap();
            let q = h.to_dense().into_inner();
            let x = Array2::from_shape_simple_fn((5, d), || rng.sample::<f64, _>(StandardNormal));
            let mut a = x.clone();
            h.apply_rows(&mut a);
            assert!((&a - &x.dot(&q.t())).iter().all(|e| e.abs() < 1e-12));
            let mut b = x.clone();
            h.apply_transpose_rows(&mut b);
            assert!((&b - &x.dot(&q)).iter().all(|e| e.abs() < 1e-12));
        }
    }

    #[test]
    fn dimension_one_is_a_fair_sign() {
        let seeds = SeedStream::new(11);
        let mut plus = 0;
        for i in 0..1000 {
            let q = sample_haar_orthogonal(1, &mut seeds.derive("d1", i)).unwrap();
            let v = q.entries()[[0, 0]];
            assert!(v == 1.0 || v == -1.0);
            plus += usize::from(v > 0.0);
        }
        let freq = plus as f64 / 1000.0;
        assert!((freq - 0.5).abs() < 0.05, "{freq}");
    }

    #[test]
    fn samples_are_orthogonal() {
        let seeds = SeedStream::new(3);
        for (i, d) in [1, 2, 3, 5, 31, 32, 33, 64, 65, 100, 257]
            .into_iter()
            .enumerate()
        {
            let q = sample_haar_orthogonal(d, &mut seeds.derive("orth", i as u64)).unwrap();
            let defect = orthogonality_defect(q.entries().view());
            assert!(defect < 1e-10, "d={d}: {defect:e}");
        }
    }

    #[test]
    fn blocked_accumulation_matches_reflector_application() {
        let seeds = SeedStream::new(5);
        for d in [2, 7, 40, 97] {
            let h = sample_haar_reflectors(d, &mut seeds.derive("wy", d as u64)).unwrap();
            let blocked = h.to_dense().into_inner();
            let reference = dense_by_columns(&h);
            let diff = (&blocked - &reference)
                .mapv(f64::abs)
                .fold(0.0, |a: f64, &b| a.max(b));
            assert!(diff < 1e-12, "d={d}: {diff:e}");
            // Q^T undoes Q
            let mut x: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
            let orig = x.clone();
            h.apply(&mut x);
            h.apply_transpose(&mut x);
            for (a, b) in x.iter().zip(&orig) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preserves_norms_of_probe_vectors() {
        let seeds = SeedStream::new(9);
        let q = sample_haar_orthogonal(50, &mut seeds.derive("q", 0)).unwrap();
        let mut rng = seeds.derive("probe", 0);
        for _ in 0..20 {
            let v = Array1::from_iter((0..50).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let w = q.entries().dot(&v);
            let rel = (w.dot(&w).sqrt() - v.dot(&v).sqrt()).abs() / v.dot(&v).sqrt();
            assert!(rel < 1e-8);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let seeds = SeedStream::new(21);
        let a = sample_haar_orthogonal(40, &mut seeds.derive("det", 0)).unwrap();
        let b = sample_haar_orthogonal(40, &mut seeds.derive("det", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_dimension() {
        let mut rng = SeedStream::new(0).derive("x", 0);
        assert!(sample_haar_orthogonal(0, &mut rng).is_err());
        assert!(sample_sphere(0, &mut rng).is_err());
    }

    #[test]
    fn first_coordinate_variance_is_one_over_d() {
        let d = 100;
        let seeds = SeedStream::new(17);
        let samples: Vec<f64> = (0..2000)
            .map(|i| {
                // first column of Q is Q e_0
                let h = sample_haar_reflectors(d, &mut seeds.derive("col", i)).unwrap();
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                h.apply(&mut e);
                e[0]
            })
            .collect();
        let var = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
        assert!((var * d as f64 - 1.0).abs() < 0.2, "{}", var * d as f64);
    }

    #[test]
    fn haar_left_invariance_of_trace_statistic() {
        let d = 8;
        let seeds = SeedStream::new(23);
        let p = sample_haar_orthogonal(d, &mut seeds.derive("fixed", 0)).unwrap();
        let mut plain = Vec::new();
        let mut rotated = Vec::new();
        for i in 0..2000 {
            let w = sample_haar_orthogonal(d, &mut seeds.derive("w", i)).unwrap();
            plain.push(w.entries().diag().sum() / (d as f64).sqrt());
            let w2 = sample_haar_orthogonal(d, &mut seeds.derive("pw", i)).unwrap();
            rotated.push(p.entries().dot(w2.entries()).diag().sum() / (d as f64).sqrt());
        }
        let (_, pvalue) = ks_two_sample(&plain, &rotated);
        assert!(pvalue > 0.01, "p = {pvalue}");
    }

    #[test]
    fn row_normalization_examples() {
        let p = row_normalized(Array2::eye(3) * 2.0).unwrap();
        assert_eq!(p.weights(), &Array2::<f64>::eye(3));
        let p = row_normalized(array![[3.0, 4.0], [0.0, 1.0]]).unwrap();
        assert!((p.weights()[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((p.weights()[[0, 1]] - 0.8).abs() < 1e-15);
        let q = sample_haar_orthogonal(30, &mut SeedStream::new(1).derive("q", 0)).unwrap();
        let p = row_normalized(q.entries().clone()).unwrap();
        let diff = (p.weights() - q.entries())
            .mapv(f64::abs)
            .fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-10);
        assert!(matches!(
            row_normalized(array![[1.0, 0.0], [0.0, 0.0]]),
            Err(Error::DegenerateRow { row: 1 })
        ));
    }

    #[test]
    fn collapsed_rows_are_redrawn() {
        let mut p = row_normalized(Array2::eye(3)).unwrap();
        p.raw_mut().row_mut(1).fill(0.0);
        let mut rng = SeedStream::new(2).derive("redraw", 0);
        assert_eq!(p.renormalize_with(&mut rng), 1);
        for row in p.weights().axis_iter(Axis(0)) {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn defect_of_row_normalized_gaussian() {
        let d = 500;
        let mut rng = SeedStream::new(4).derive("g", 0);
        let raw = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
        let p = row_normalized(raw).unwrap();
        let defect = orthogonality_defect(p.weights().view());
        assert!(defect > 0.0 && defect < 1.0, "{defect}");
        let gram = p.weights().t().dot(p.weights());
        let direct = gram
            .indexed_iter()
            .map(|((i, j), g)| (g - f64::from(u8::from(i == j))).abs())
            .fold(0.0, f64::max);
        assert_eq!(defect, direct);
        assert_eq!(orthogonality_defect(Array2::<f64>::eye(4).view()), 0.0);
    }

    #[test]
    fn raw_gradient_is_orthogonal_to_rows() {
        let mut rng = SeedStream::new(6).derive("rg", 0);
        let raw = Array2::from_shape_simple_fn((4, 4), || rng.sample::<f64, _>(StandardNormal));
        let p = row_normalized(raw).unwrap();
        let g = Array2::from_shape_simple_fn((4, 4), || rng.sample::<f64, _>(StandardNormal));
        let gv = p.raw_gradient(&g);
        for i in 0..4 {
            assert!(gv.row(i).dot(&p.raw().row(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_samples() {
        let seeds = SeedStream::new(8);
        let mut rng = seeds.derive("s", 0);
        for d in [1, 2, 10, 300] {
            let v = sample_sphere(d, &mut rng).unwrap();
            assert!((dot(&v, &v) / d as f64 - 1.0).abs() < 1e-12);
        }
        // d = 2: the angle is uniform
        let angles: Vec<f64> = (0..10_000)
            .map(|_| {
                let v = sample_sphere(2, &mut rng).unwrap();
                (v[1].atan2(v[0]) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            })
            .collect();
        let dstat = ks_uniform(&angles);
        // 1% critical value 1.628 / sqrt(n)
        assert!(dstat < 1.628 / 100.0, "{dstat}");
        // d = 10: coordinate means within 4 standard errors of zero
        let n = 10_000;
        let mut mean = [0.0; 10];
        for _ in 0..n {
            let v = sample_sphere(10, &mut rng).unwrap();
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n as f64;
            }
        }
        // each coordinate has unit variance on the sqrt(d) sphere
        for m in mean {
            assert!(m.abs() < 4.0 / (n as f64).sqrt(), "{m}");
        }
    }

    #[test]
    fn semi_orthogonal_adapters() {
        let mut rng = SeedStream::new(12).derive("a", 0);
        let wide = sample_semi_orthogonal(8, 20, &mut rng).unwrap();
        let gram = wide.dot(&wide.t());
        assert!((&gram - &Array2::<f64>::eye(8)).mapv(f64::abs).sum() < 1e-10);
        let tall = sample_semi_orthogonal(20, 8, &mut rng).unwrap();
        let gram = tall.t().dot(&tall);
        assert!((&gram - &Array2::<f64>::eye(8)).mapv(f64::abs).sum() < 1e-10);
    }
}
