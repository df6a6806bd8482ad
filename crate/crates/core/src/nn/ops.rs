//! Dense kernels over row-major `f64` slices. Summation order is fixed so
//! results do not depend on the caller.

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
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

/// `out += W x` with `W` of shape `[out.len(), x.len()]`.
pub(crate) fn gemv(out: &mut [f64], w: &[f64], x: &[f64]) {
    debug_assert_eq!(w.len(), out.len() * x.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(x.len())) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ v` with `W` of shape `[v.len(), out.len()]`.
pub(crate) fn gemv_t(out: &mut [f64], w: &[f64], v: &[f64]) {
    debug_assert_eq!(w.len(), out.len() * v.len());
    for (row, &vi) in w.chunks_exact(out.len()).zip(v) {
        if vi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += vi * wij;
        }
    }
}

/// `g += v xᵀ`.
pub(crate) fn outer(g: &mut [f64], v: &[f64], x: &[f64]) {
    debug_assert_eq!(g.len(), v.len() * x.len());
    for (row, &vi) in g.chunks_exact_mut(x.len()).zip(v) {
        if vi == 0.0 {
            continue;
        }
        for (gij, xj) in row.iter_mut().zip(x) {
            *gij += vi * xj;
        }
    }
}

pub(crate) fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_naive_loops() {
        let w: Vec<f64> = (0..15).map(|i| i as f64 * 0.5 - 3.0).collect();
        let x = [1.0, -2.0, 0.5, 3.0, -1.0];
        let v = [0.3, -0.7, 2.0];
        let mut out = vec![1.0; 3];
        gemv(&mut out, &w, &x);
        for r in 0..3 {
            let naive: f64 = 1.0 + (0..5).map(|c| w[r * 5 + c] * x[c]).sum::<f64>();
            assert!((out[r] - naive).abs() < 1e-12);
        }
        let mut back = vec![0.0; 5];
        gemv_t(&mut back, &w, &v);
        for c in 0..5 {
            let naive: f64 = (0..3).map(|r| w[r * 5 + c] * v[r]).sum();
            assert!((back[c] - naive).abs() < 1e-12);
        }
        let mut g = vec![0.0; 15];
        outer(&mut g, &v, &x);
        assert_eq!(g[7], v[1] * x[2]);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
