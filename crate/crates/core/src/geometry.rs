//! Small exact geometry on finite point sets: distance to a convex hull and
//! box vertex enumeration.

use nalgebra::{DMatrix, DVector};

/// Largest point set accepted by [`hull_distance`] (subset enumeration).
pub const MAX_HULL_POINTS: usize = 16;

/// Euclidean distance from `z` to `conv(points)`.
///
/// By duality this equals the largest support-function gap
/// `sup_{|d|=1} (dᵀz - max_p dᵀp)`, so a positive value is exactly the amount by
/// which `z` escapes the hull. Computed by projecting onto the affine hull of
/// every affinely independent subset and keeping projections with nonnegative
/// barycentric weights; the nearest point of the hull always lies in the
/// relative interior of one such face.
pub fn hull_distance(points: &[Vec<f64>], z: &[f64]) -> f64 {
    let pts = dedup(points);
    assert!(!pts.is_empty(), "hull of an empty point set");
    assert!(
        pts.len() <= MAX_HULL_POINTS,
        "hull_distance supports at most {MAX_HULL_POINTS} distinct points"
    );
    let d = z.len();
    let zv = DVector::from_column_slice(z);
    let m = pts.len();
    let mut best = f64::INFINITY;

    for mask in 1u32..(1u32 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if idx.len() > d + 1 {
            continue;
        }
        let p0 = DVector::from_column_slice(&pts[idx[0]]);
        if idx.len() == 1 {
            best = best.min((&p0 - &zv).norm());
            continue;
        }
        let cols = idx.len() - 1;
        let mut dm = DMatrix::zeros(d, cols);
        for (c, &i) in idx[1..].iter().enumerate() {
            for r in 0..d {
                dm[(r, c)] = pts[i][r] - p0[r];
            }
        }
        let svd = dm.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 || svd.rank(1e-10 * smax) < cols {
            continue;
        }
        let Ok(a) = svd.solve(&(&zv - &p0), 1e-14 * smax) else {
            continue;
        };
        let w0 = 1.0 - a.sum();
        if w0 < -1e-12 || a.iter().any(|&w| w < -1e-12) {
            continue;
        }
        let proj = &p0 + &dm * &a;
        best = best.min((proj - &zv).norm());
    }
    best
}

fn dedup(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| q == p) {
            out.push(p.clone());
        }
    }
    out
}

/// All `2^n` vertices of the box `[lo, hi]`.
pub fn box_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    (0..(1usize << n))
        .map(|mask| {
            (0..n)
                .map(|i| if mask & (1 << i) != 0 { hi[i] } else { lo[i] })
                .collect()
        })
        .collect()
}

/// Vertices of `[lo, hi] ∩ {x : aᵀx + a0 <= level}`.
///
/// Box vertices inside the halfspace plus every point where the hyperplane cuts
/// a box edge. Returns an empty list when the intersection is empty.
pub fn clipped_box_vertices(lo: &[f64], hi: &[f64], a: &[f64], a0: f64, level: f64) -> Vec<Vec<f64>> {
    let n = lo.len();
    let f = |x: &[f64]| a0 + a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - level;
    let verts = box_vertices(lo, hi);
    let vals: Vec<f64> = verts.iter().map(|v| f(v)).collect();
    let mut out: Vec<Vec<f64>> = verts
        .iter()
        .zip(&vals)
        .filter(|(_, &g)| g <= 0.0)
        .map(|(v, _)| v.clone())
        .collect();
    for mask in 0..(1usize << n) {
        for i in 0..n {
            if mask & (1 << i) != 0 {
                continue;
            }
            let other = mask | (1 << i);
            let (g1, g2) = (vals[mask], vals[other]);
            if (g1 < 0.0 && g2 > 0.0) || (g1 > 0.0 && g2 < 0.0) {
                let t = g1 / (g1 - g2);
                let p: Vec<f64> = verts[mask]
                    .iter()
                    .zip(&verts[other])
                    .map(|(x, y)| x + t * (y - x))
                    .collect();
                out.push(p);
            }
        }
    }
    out
}
