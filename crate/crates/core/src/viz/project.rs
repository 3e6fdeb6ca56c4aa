//! Orthographic views of 3-D point sets.

use crate::{Error, Result, Scalar, Tensor};

/// Rotation angles in degrees: `p' = Rx(elevation) · Rz(azimuth) · p`; the
/// screen shows `(x', y')` and `z'` is depth toward the viewer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub azimuth: f64,
    pub elevation: f64,
}

/// The three views drawn for every 3-D figure.
pub const DEFAULT_VIEWS: [View; 3] = [
    View { azimuth: 0.0, elevation: 0.0 },
    View { azimuth: 35.0, elevation: -60.0 },
    View { azimuth: 125.0, elevation: -60.0 },
];

impl View {
    pub(crate) fn matrix(self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        // Rx(e) · Rz(a)
        [[ca, -sa, 0.0], [ce * sa, ce * ca, -se], [se * sa, se * ca, ce]]
    }

    pub(crate) fn apply(self, p: [f64; 3]) -> [f64; 3] {
        let r = self.matrix();
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&r) {
            *o = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
        }
        out
    }
}

/// Screen coordinates `N × 2` and depth per point (larger is nearer).
pub fn project_3d_with_depth<T: Scalar>(points: &Tensor<T>, view: View) -> Result<(Tensor<T>, Vec<f64>)> {
    let (n, d) = points.dims2()?;
    if d != 3 {
        return Err(Error::Dimension(format!("3-D projection needs N×3 points, got {:?}", points.shape())));
    }
    let mut xy = Vec::with_capacity(2 * n);
    let mut depth = Vec::with_capacity(n);
    for i in 0..n {
        let r = points.row(i);
        let q = view.apply([r[0].to_f64_lossy(), r[1].to_f64_lossy(), r[2].to_f64_lossy()]);
        xy.push(T::of(q[0]));
        xy.push(T::of(q[1]));
        depth.push(q[2]);
    }
    Ok((Tensor::from_vec(&[n, 2], xy)?, depth))
}

pub fn project_3d<T: Scalar>(points: &Tensor<T>, azimuth: f64, elevation: f64) -> Result<Tensor<T>> {
    Ok(project_3d_with_depth(points, View { azimuth, elevation })?.0)
}

/// Draw order: farthest (smallest depth) first, ties by index.
pub(crate) fn far_first(depth: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..depth.len()).collect();
    order.sort_by(|&a, &b| depth[a].total_cmp(&depth[b]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn front_view_drops_depth() {
        let p = Tensor::from_rows(&[vec![1.0f64, 2.0, 3.0], vec![-4.0, 0.5, -7.0]]).unwrap();
        let (xy, depth) = project_3d_with_depth(&p, View { azimuth: 0.0, elevation: 0.0 }).unwrap();
        assert_eq!(xy.data(), &[1.0, 2.0, -4.0, 0.5]);
        assert_eq!(depth, vec![3.0, -7.0]);
        assert_eq!(far_first(&depth), vec![1, 0]);
    }

    #[test]
    fn in_plane_distances_preserved() {
        // points in the z = 0 plane, azimuth-only rotation keeps them in the screen plane
        let p = Tensor::from_rows(&[vec![0.0f64, 0.0, 0.0], vec![3.0, 4.0, 0.0], vec![-1.0, 2.0, 0.0]]).unwrap();
        let q = project_3d(&p, 37.0, 0.0).unwrap();
        let d = |t: &Tensor<f64>, a: usize, b: usize, k: usize| {
            (0..k).map(|j| (t.row(a)[j] - t.row(b)[j]).powi(2)).sum::<f64>().sqrt()
        };
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!((d(&p, a, b, 3) - d(&q, a, b, 2)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_independent_rotation() {
        let mut rng = Rng::new(9);
        let p = Tensor::<f64>::randn(&[50, 3], 1.0, &mut rng).unwrap();
        let (az, el) = (0.7f64, -1.1f64);
        let rz = [[az.cos(), -az.sin(), 0.0], [az.sin(), az.cos(), 0.0], [0.0, 0.0, 1.0]];
        let rx = [[1.0, 0.0, 0.0], [0.0, el.cos(), -el.sin()], [0.0, el.sin(), el.cos()]];
        let q = project_3d(&p, az.to_degrees(), el.to_degrees()).unwrap();
        for i in 0..50 {
            let v = p.row(i);
            let a: Vec<f64> = (0..3).map(|r| (0..3).map(|c| rz[r][c] * v[c]).sum()).collect();
            let b: Vec<f64> = (0..3).map(|r| (0..3).map(|c| rx[r][c] * a[c]).sum()).collect();
            assert!((q.row(i)[0] - b[0]).abs() < 1e-12 && (q.row(i)[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_2d() {
        assert!(project_3d(&Tensor::<f64>::zeros(&[2, 2]).unwrap(), 0.0, 0.0).is_err());
    }
}
