//! Contact-count coupling estimation between part clouds.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::se3::Vec3;

pub const DEFAULT_TAU_D: f64 = 0.02;
pub const DEFAULT_TAU_C: usize = 10;

/// Symmetric 0/1 adjacency with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct CouplingMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(n);
        for &(i, j) in edges {
            m.set(i, j, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`; the diagonal stays zero.
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        if i == j {
            return;
        }
        self.cells[i * self.n + j] = on;
        self.cells[j * self.n + i] = on;
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    /// Edges `(i, j)` with `i < j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| ((i + 1)..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Same graph with parts relabelled: part `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.n);
        for (i, j) in self.edges() {
            out.set(perm[i], perm[j], true);
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    /// Rows of space-separated 0/1.
    pub fn render(&self) -> String {
        self.to_rows()
            .iter()
            .map(|r| {
                let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
                cells.join(" ") + "\n"
            })
            .collect()
    }
}

impl From<Vec<Vec<u8>>> for CouplingMatrix {
    fn from(rows: Vec<Vec<u8>>) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            for (j, &c) in r.iter().enumerate().take(n) {
                if c != 0 {
                    m.set(i, j, true);
                }
            }
        }
        m
    }
}

impl From<CouplingMatrix> for Vec<Vec<u8>> {
    fn from(m: CouplingMatrix) -> Self {
        m.to_rows()
    }
}

/// Number of pairs `(m, n)` with `‖a_m − b_n‖ < tau_d`, by brute force.
pub fn contact_count_brute(a: &[Vec3], b: &[Vec3], tau_d: f64) -> usize {
    let t2 = tau_d * tau_d;
    a.iter()
        .map(|p| b.iter().filter(|q| (*p - *q).norm_squared() < t2).count())
        .sum()
}

fn cell_of(p: &Vec3, inv: f64) -> (i64, i64, i64) {
    (
        (p.x * inv).floor() as i64,
        (p.y * inv).floor() as i64,
        (p.z * inv).floor() as i64,
    )
}

/// Same count as [`contact_count_brute`], using a uniform grid of cell size
/// `tau_d` over `b` and scanning the 27 cells around each point of `a`.
pub fn pairwise_contact_count(a: &[Vec3], b: &[Vec3], tau_d: f64) -> usize {
    assert!(tau_d > 0.0, "tau_d must be positive");
    let inv = 1.0 / tau_d;
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, q) in b.iter().enumerate() {
        grid.entry(cell_of(q, inv)).or_default().push(i as u32);
    }
    let t2 = tau_d * tau_d;
    let mut count = 0;
    for p in a {
        let (cx, cy, cz) = cell_of(p, inv);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        count += bucket
                            .iter()
                            .filter(|&&k| (p - b[k as usize]).norm_squared() < t2)
                            .count();
                    }
                }
            }
        }
    }
    count
}

/// Couple parts `i` and `j` iff their clouds have at least `tau_c` close pairs.
pub fn estimate_coupling(clouds: &[Vec<Vec3>], tau_d: f64, tau_c: usize) -> CouplingMatrix {
    let n = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let hits: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, j)| pairwise_contact_count(&clouds[i], &clouds[j], tau_d) >= tau_c)
        .collect();
    let mut m = CouplingMatrix::zeros(n);
    for (&(i, j), hit) in pairs.iter().zip(hits) {
        m.set(i, j, hit);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, offset: Vec3) -> Vec<Vec3> {
        (0..n)
            .map(|_| offset + Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 0.3)
            .collect()
    }

    #[test]
    fn separated_clouds_have_no_contacts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_cloud(&mut rng, 100, Vec3::zeros());
        // Bounding spheres of radius < 0.27 around centers 1.0 apart leave a gap > 10 tau_d.
        let b = random_cloud(&mut rng, 100, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(pairwise_contact_count(&a, &b, 0.02), 0);
    }

    #[test]
    fn identical_clouds_pair_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_cloud(&mut rng, 150, Vec3::zeros());
        assert!(pairwise_contact_count(&a, &a, 1e-6) >= 150);
    }

    #[test]
    fn grid_matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_cloud(&mut rng, 200, Vec3::zeros());
            let b = random_cloud(&mut rng, 200, Vec3::new(0.2, -0.1, 0.05));
            let tau = rng.gen_range(0.005..0.1);
            assert_eq!(pairwise_contact_count(&a, &b, tau), contact_count_brute(&a, &b, tau));
        }
    }

    #[test]
    fn matrix_serde_and_render() {
        let m = CouplingMatrix::from_edges(3, &[(0, 1), (2, 1)]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[0,1,0],[1,0,1],[0,1,0]]");
        let back: CouplingMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.render(), "0 1 0\n1 0 1\n0 1 0\n");
        assert!(m.is_connected());
        assert!(!CouplingMatrix::from_edges(3, &[(0, 1)]).is_connected());
    }

    fn clouds_strategy() -> impl Strategy<Value = Vec<Vec<Vec3>>> {
        prop::collection::vec(
            prop::collection::vec(
                (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5).prop_map(|(x, y, z)| Vec3::new(x, y, z)),
                1..40,
            ),
            2..5,
        )
    }

    proptest! {
        #[test]
        fn coupling_is_symmetric_with_zero_diagonal(clouds in clouds_strategy(), tau in 0.01f64..0.3, tc in 1usize..20) {
            let m = estimate_coupling(&clouds, tau, tc);
            for i in 0..m.len() {
                prop_assert!(!m.get(i, i));
                for j in 0..m.len() {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }

        #[test]
        fn coupling_is_monotone_in_thresholds(clouds in clouds_strategy(), tau in 0.01f64..0.2, tc in 1usize..20) {
            let base = estimate_coupling(&clouds, tau, tc);
            let wider = estimate_coupling(&clouds, tau * 1.5, tc);
            let stricter = estimate_coupling(&clouds, tau, tc + 3);
            for (i, j) in base.edges() {
                prop_assert!(wider.get(i, j));
            }
            for (i, j) in stricter.edges() {
                prop_assert!(base.get(i, j));
            }
        }

        #[test]
        fn grid_equals_brute_force(clouds in clouds_strategy(), tau in 0.005f64..0.4) {
            prop_assert_eq!(
                pairwise_contact_count(&clouds[0], &clouds[1], tau),
                contact_count_brute(&clouds[0], &clouds[1], tau)
            );
        }
    }
}
