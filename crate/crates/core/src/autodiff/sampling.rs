//! Point sampling and grouping for set abstraction. Not differentiable.

use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Greedy farthest point sampling from index 0. Each step picks the point
/// farthest from the already selected set, lowest index on ties.
pub fn farthest_point_sample(points: &[Vec3], k: usize) -> Result<Vec<usize>> {
    if k > points.len() {
        return Err(Error::ShapeMismatch {
            op: "farthest_point_sample",
            left: vec![points.len(), 3],
            right: vec![k],
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(k);
    let mut last = 0;
    out.push(last);
    while out.len() < k {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - points[last]).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best_d {
                best_d = dist[i];
                best = i;
            }
        }
        last = best;
        out.push(last);
    }
    Ok(out)
}

/// Up to `max_neighbors` indices per center with distance `< radius`, in
/// ascending index order, padded by repeating the first hit. Flat
/// `centers × max_neighbors`.
pub fn ball_query(
    points: &[Vec3],
    centers: &[Vec3],
    radius: f64,
    max_neighbors: usize,
) -> Result<Vec<usize>> {
    let r2 = radius * radius;
    let mut out = Vec::with_capacity(centers.len() * max_neighbors);
    for (ci, c) in centers.iter().enumerate() {
        let start = out.len();
        for (i, p) in points.iter().enumerate() {
            if (p - c).norm_squared() < r2 {
                out.push(i);
                if out.len() - start == max_neighbors {
                    break;
                }
            }
        }
        if out.len() == start {
            return Err(Error::EmptyNeighborhood {
                center: ci,
                radius,
                part: None,
            });
        }
        let first = out[start];
        out.resize(start + max_neighbors, first);
    }
    Ok(out)
}
