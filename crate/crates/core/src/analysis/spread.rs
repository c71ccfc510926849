use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::kinematics::{FootPoint, Trajectory};
use crate::scalar::Real;

/// Raster pixel edge (m).
pub const PIXEL_SIZE: f64 = 1e-3;

/// Closed polygon in the hip frame, last vertex implicitly joined to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    /// Interior of a desired loop.
    pub fn from_trajectory<T: Real>(traj: &Trajectory<T>) -> Self {
        Self::new(traj.loop_points().iter().map(|p| [p.x.f64(), p.z.f64()]).collect())
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            .abs()
            / 2.0
    }

    fn bounds(&self) -> [[f64; 2]; 2] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        [lo, hi]
    }

    /// Even-odd rule; points on an edge count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let eps = 1e-12;
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    if cross.abs() > eps * len.max(1.0) {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    dot >= -eps && dot <= len * len + eps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadResult {
    /// Occupied share of the region's pixels.
    pub ratio: f64,
    pub occupied: usize,
    pub total: usize,
    /// Raster size (columns, rows).
    pub grid: [usize; 2],
    pub region: Polygon,
}

/// Share of the region's 1 mm pixels visited by at least one point.
///
/// A pixel belongs to the region when its centre lies inside the polygon.
pub fn spread<T: Real>(points: &[FootPoint<T>], region: &Polygon) -> Result<SpreadResult, AnalysisError> {
    if region.vertices.len() < 3 || !(region.area() > 0.0) {
        return Err(AnalysisError::DegenerateRegion);
    }
    let [lo, hi] = region.bounds();
    let origin = [
        (lo[0] / PIXEL_SIZE).floor() * PIXEL_SIZE,
        (lo[1] / PIXEL_SIZE).floor() * PIXEL_SIZE,
    ];
    let cols = (((hi[0] - origin[0]) / PIXEL_SIZE).floor() as usize + 1).max(1);
    let rows = (((hi[1] - origin[1]) / PIXEL_SIZE).floor() as usize + 1).max(1);
    let mut inside = vec![false; cols * rows];
    for r in 0..rows {
        for c in 0..cols {
            let centre = [
                origin[0] + (c as f64 + 0.5) * PIXEL_SIZE,
                origin[1] + (r as f64 + 0.5) * PIXEL_SIZE,
            ];
            inside[r * cols + c] = region.contains(centre);
        }
    }
    let mut visited = vec![false; cols * rows];
    for p in points {
        let (x, z) = (p.x.f64(), p.z.f64());
        if !(x.is_finite() && z.is_finite()) {
            continue;
        }
        let c = ((x - origin[0]) / PIXEL_SIZE).floor();
        let r = ((z - origin[1]) / PIXEL_SIZE).floor();
        if c < 0.0 || r < 0.0 || c >= cols as f64 || r >= rows as f64 {
            continue;
        }
        visited[r as usize * cols + c as usize] = true;
    }
    let total = inside.iter().filter(|v| **v).count();
    if total == 0 {
        return Err(AnalysisError::DegenerateRegion);
    }
    let occupied = inside.iter().zip(&visited).filter(|(a, b)| **a && **b).count();
    Ok(SpreadResult {
        ratio: occupied as f64 / total as f64,
        occupied,
        total,
        grid: [cols, rows],
        region: region.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Polygon {
        Polygon::new(vec![[0.0, 0.0], [0.01, 0.0], [0.01, 0.01], [0.0, 0.01]])
    }

    #[test]
    fn empty_and_full_coverage() {
        let sq = square();
        let none: Vec<FootPoint<f64>> = vec![FootPoint::new(0.5, 0.5)];
        assert_eq!(spread(&none, &sq).unwrap().ratio, 0.0);
        let all: Vec<FootPoint<f64>> = (0..10)
            .flat_map(|c| (0..10).map(move |r| FootPoint::new((c as f64 + 0.5) * 1e-3, (r as f64 + 0.5) * 1e-3)))
            .collect();
        let s = spread(&all, &sq).unwrap();
        assert_eq!(s.total, 100);
        assert_eq!(s.ratio, 1.0);
    }

    #[test]
    fn triangle_counts_half_the_box() {
        let tri = Polygon::new(vec![[0.0, 0.0], [0.02, 0.0], [0.0, 0.02]]);
        let s = spread::<f64>(&[], &tri).unwrap();
        // Centres with c + r <= 19, the diagonal ones lying on the hypotenuse.
        assert_eq!(s.total, (1..=20).sum::<usize>());
    }

    #[test]
    fn boundary_points_are_inside() {
        let sq = square();
        assert!(sq.contains([0.0, 0.005]));
        assert!(sq.contains([0.01, 0.01]));
        assert!(!sq.contains([0.0100001, 0.005]));
    }

    #[test]
    fn degenerate_region() {
        let line = Polygon::new(vec![[0.0, 0.0], [0.01, 0.0], [0.02, 0.0]]);
        assert_eq!(spread::<f64>(&[], &line), Err(AnalysisError::DegenerateRegion));
    }

    proptest! {
        #[test]
        fn more_points_never_lower_the_ratio(
            pts in prop::collection::vec((0.0..0.012f64, 0.0..0.012f64), 0..60),
            extra in prop::collection::vec((0.0..0.012f64, 0.0..0.012f64), 0..20),
        ) {
            let sq = square();
            let a: Vec<FootPoint<f64>> = pts.iter().map(|(x, z)| FootPoint::new(*x, *z)).collect();
            let mut b = a.clone();
            b.extend(extra.iter().map(|(x, z)| FootPoint::new(*x, *z)));
            let ra = spread(&a, &sq).unwrap().ratio;
            prop_assert!(spread(&b, &sq).unwrap().ratio >= ra);
            let mut dup = a.clone();
            dup.extend(a.iter().copied());
            prop_assert_eq!(spread(&dup, &sq).unwrap().ratio, ra);
        }
    }
}
