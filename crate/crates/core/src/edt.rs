//! Exact Euclidean distance transform on a 3-D lattice.
//!
//! Separable lower-envelope-of-parabolas algorithm (Felzenszwalb & Huttenlocher):
//! one 1-D squared transform per axis, each exact, composing to the exact
//! squared distance to the nearest feature cell centre.

use rayon::prelude::*;

/// Squared distances, in units of cells², from every cell to the nearest
/// feature cell. Cells with no feature anywhere get `f64::INFINITY`.
pub fn squared_edt(dims: [usize; 3], features: &[bool]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    assert_eq!(features.len(), nx * ny * nz);
    let mut d: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();

    // axis 2: contiguous rows
    d.par_chunks_mut(nz).for_each(|row| {
        let mut out = vec![0.0; nz];
        transform_1d(row, &mut out);
        row.copy_from_slice(&out);
    });

    // axis 1: stride nz inside each i-slab
    d.par_chunks_mut(ny * nz).for_each(|slab| {
        let mut line = vec![0.0; ny];
        let mut out = vec![0.0; ny];
        for k in 0..nz {
            for j in 0..ny {
                line[j] = slab[j * nz + k];
            }
            transform_1d(&line, &mut out);
            for j in 0..ny {
                slab[j * nz + k] = out[j];
            }
        }
    });

    // axis 0: gather whole columns
    let plane = ny * nz;
    let columns: Vec<Vec<f64>> = (0..plane)
        .into_par_iter()
        .map(|jk| {
            let line: Vec<f64> = (0..nx).map(|i| d[i * plane + jk]).collect();
            let mut out = vec![0.0; nx];
            transform_1d(&line, &mut out);
            out
        })
        .collect();
    for (jk, col) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            d[i * plane + jk] = v;
        }
    }
    d
}

/// 1-D squared distance transform of a sampled function `f`.
fn transform_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everywhere
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}
