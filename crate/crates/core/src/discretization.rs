//! Conservative square-grid compression of a continuous map.
//!
//! A bin is free only when no obstacle interior overlaps it and an inspector
//! disc centered in the bin is collision-free. Free bins are joined by
//! 4-connected edges; diagonal moves through bin corners are never assumed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MapSpec, Vec2};
use crate::sensing::InspectorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedMap {
    pub epsilon: f64,
    pub nx: usize,
    pub ny: usize,
    pub l_x: f64,
    pub l_y: f64,
    /// Row-major occupancy, `free[iy * nx + ix]`.
    pub free: Vec<bool>,
}

/// Outcome of checking a discretization length against the valid-map class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub epsilon: f64,
    pub satisfies_lower: bool,
    pub satisfies_upper: bool,
    pub traversable: bool,
    pub bin_count: usize,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.satisfies_lower && self.satisfies_upper && self.traversable
    }
}

/// Builds the conservative occupancy grid of `map` at side length `epsilon`
/// for an inspector of diameter `r_i`.
pub fn discretize(map: &MapSpec, epsilon: f64, r_i: f64) -> Result<CompressedMap> {
    if !(epsilon.is_finite() && epsilon > 0.0) || epsilon > map.l_x.min(map.l_y) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let nx = bins_along(map.l_x, epsilon);
    let ny = bins_along(map.l_y, epsilon);
    let mut free = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let lo = Vec2::new(ix as f64 * epsilon, iy as f64 * epsilon);
            let hi = Vec2::new(
                ((ix + 1) as f64 * epsilon).min(map.l_x),
                ((iy + 1) as f64 * epsilon).min(map.l_y),
            );
            let overlapped = map.obstacles.iter().any(|ob| ob.overlaps_box(lo, hi));
            let center = (lo + hi) * 0.5;
            free.push(!overlapped && map.is_free(center, r_i));
        }
    }
    Ok(CompressedMap {
        epsilon,
        nx,
        ny,
        l_x: map.l_x,
        l_y: map.l_y,
        free,
    })
}

fn bins_along(length: f64, epsilon: f64) -> usize {
    let n = length / epsilon;
    // guard against 10.0 / 0.1 = 100.00000000000001 style rounding
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        n.ceil() as usize
    }
}

impl CompressedMap {
    pub fn bin_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    pub fn is_free_bin(&self, bin: usize) -> bool {
        self.free.get(bin).copied().unwrap_or(false)
    }

    pub fn free_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.free.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i)
    }

    pub fn coords(&self, bin: usize) -> (usize, usize) {
        (bin % self.nx, bin / self.nx)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Bin containing `p`, or `None` outside the map.
    pub fn bin_of(&self, p: Vec2) -> Option<usize> {
        if !(p.is_finite() && (0.0..=self.l_x).contains(&p.x) && (0.0..=self.l_y).contains(&p.y)) {
            return None;
        }
        let ix = ((p.x / self.epsilon) as usize).min(self.nx - 1);
        let iy = ((p.y / self.epsilon) as usize).min(self.ny - 1);
        Some(self.index(ix, iy))
    }

    /// Lower and upper corners of a bin.
    pub fn bin_bounds(&self, bin: usize) -> (Vec2, Vec2) {
        let (ix, iy) = self.coords(bin);
        let lo = Vec2::new(ix as f64 * self.epsilon, iy as f64 * self.epsilon);
        let hi = Vec2::new(
            ((ix + 1) as f64 * self.epsilon).min(self.l_x),
            ((iy + 1) as f64 * self.epsilon).min(self.l_y),
        );
        (lo, hi)
    }

    /// Free 4-neighbors of a free bin.
    pub fn neighbors(&self, bin: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(bin);
        let mut out = [None; 4];
        if ix > 0 {
            out[0] = Some(self.index(ix - 1, iy));
        }
        if ix + 1 < self.nx {
            out[1] = Some(self.index(ix + 1, iy));
        }
        if iy > 0 {
            out[2] = Some(self.index(ix, iy - 1));
        }
        if iy + 1 < self.ny {
            out[3] = Some(self.index(ix, iy + 1));
        }
        out.into_iter().flatten().filter(move |&b| self.free[b])
    }

    /// Undirected adjacency edges `(a, b)` with `a < b` among free bins.
    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        self.free_bins()
            .flat_map(|a| self.neighbors(a).filter(move |&b| a < b).map(move |b| (a, b)))
            .collect()
    }

    /// Breadth-first hop distances from `source` over free bins; `None` for
    /// unreachable or occupied bins.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.bin_count()];
        if !self.is_free_bin(source) {
            return dist;
        }
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(b) = queue.pop_front() {
            let d = dist[b].unwrap_or(0);
            for n in self.neighbors(b) {
                if dist[n].is_none() {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Largest hop distance from any free bin to `bin` (the graph radius used
    /// to non-dimensionalize passage times). `None` when disconnected.
    pub fn graph_radius(&self, bin: usize) -> Option<usize> {
        let dist = self.bfs_distances(bin);
        let mut radius = 0;
        for b in self.free_bins() {
            radius = radius.max(dist[b]?);
        }
        Some(radius)
    }

    /// Connected components of the free bins, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.bin_count()];
        let mut out = Vec::new();
        for start in self.free_bins() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(b) = stack.pop() {
                comp.push(b);
                for n in self.neighbors(b) {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Text dump: one row per grid line, top row first, `.` free and `#`
    /// occupied.
    pub fn ascii(&self) -> Vec<String> {
        (0..self.ny)
            .rev()
            .map(|iy| {
                (0..self.nx)
                    .map(|ix| if self.free[self.index(ix, iy)] { '.' } else { '#' })
                    .collect()
            })
            .collect()
    }

    /// JSON export for debugging and for the bound procedure.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "epsilon": self.epsilon,
            "nx": self.nx,
            "ny": self.ny,
            "free_bins": self.free_count(),
            "traversable": is_traversable(self),
            "grid": self.ascii(),
        })
    }
}

/// True iff the free bins form exactly one 4-connected component.
pub fn is_traversable(cm: &CompressedMap) -> bool {
    cm.components().len() == 1
}

/// Largest candidate length at or above `r_i` whose grid is traversable.
pub fn fundamental_length(
    map: &MapSpec,
    inspector: &InspectorSpec,
    candidates: &[f64],
) -> Result<Option<f64>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for eps in sorted {
        if eps < inspector.r_i {
            continue;
        }
        let cm = discretize(map, eps, inspector.r_i)?;
        if is_traversable(&cm) {
            return Ok(Some(eps));
        }
    }
    Ok(None)
}

/// Default candidate lengths: `min(l_x, l_y) / k` for `k = 1, 2, ...` down to
/// the inspector diameter.
pub fn default_candidates(map: &MapSpec, inspector: &InspectorSpec) -> Vec<f64> {
    let side = map.l_x.min(map.l_y);
    (1..)
        .map(|k| side / k as f64)
        .take_while(|&e| e >= inspector.r_i)
        .collect()
}

/// Checks `r_I <= epsilon <= r_D / sqrt(2)` and traversability of `cm`.
pub fn validate(epsilon: f64, inspector: &InspectorSpec, cm: &CompressedMap) -> ValidityReport {
    ValidityReport {
        epsilon,
        satisfies_lower: epsilon >= inspector.r_i,
        satisfies_upper: epsilon <= inspector.r_d / std::f64::consts::SQRT_2,
        traversable: is_traversable(cm),
        bin_count: cm.bin_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Obstacle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inspector(r_i: f64, r_d: f64) -> InspectorSpec {
        InspectorSpec {
            r_i,
            r_d,
            speed: 0.1,
            measure_seconds: 3.0,
        }
    }

    fn room() -> MapSpec {
        MapSpec::empty(10.0, 10.0, 60.0)
    }

    /// Independent connectivity oracle: flood fill from every free bin and
    /// compare reach against the free count.
    fn flood_connected(cm: &CompressedMap) -> bool {
        let free: Vec<usize> = (0..cm.bin_count()).filter(|&b| cm.free[b]).collect();
        let Some(&start) = free.first() else {
            return false;
        };
        let mut reached = vec![false; cm.bin_count()];
        reached[start] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for iy in 0..cm.ny {
                for ix in 0..cm.nx {
                    let b = iy * cm.nx + ix;
                    if !cm.free[b] || reached[b] {
                        continue;
                    }
                    let nbrs = [
                        (ix > 0).then(|| b - 1),
                        (ix + 1 < cm.nx).then(|| b + 1),
                        (iy > 0).then(|| b - cm.nx),
                        (iy + 1 < cm.ny).then(|| b + cm.nx),
                    ];
                    if nbrs.into_iter().flatten().any(|n| reached[n]) {
                        reached[b] = true;
                        changed = true;
                    }
                }
            }
        }
        free.iter().all(|&b| reached[b])
    }

    #[test]
    fn empty_room_grid() {
        let cm = discretize(&room(), 2.0, 0.4).unwrap();
        assert_eq!((cm.nx, cm.ny), (5, 5));
        assert_eq!(cm.free_count(), 25);
        assert!(is_traversable(&cm));
        assert_eq!(cm.adjacency().len(), 40);
    }

    #[test]
    fn full_wall_splits_the_grid() {
        let map = room().with_obstacles(vec![Obstacle::rect((4.0, 0.0), (6.0, 10.0))]);
        let cm = discretize(&map, 2.0, 0.4).unwrap();
        for iy in 0..5 {
            assert!(!cm.free[cm.index(2, iy)]);
        }
        assert_eq!(cm.free_count(), 20);
        assert!(!is_traversable(&cm));
        assert!(!flood_connected(&cm));
        assert_eq!(cm.components().len(), 2);
    }

    #[test]
    fn partial_wall_keeps_corridor() {
        let map = room().with_obstacles(vec![Obstacle::rect((4.0, 0.0), (6.0, 8.0))]);
        let cm = discretize(&map, 2.0, 0.4).unwrap();
        assert!(cm.free[cm.index(2, 4)]);
        assert!(flood_connected(&cm));
        assert!(is_traversable(&cm));
    }

    #[test]
    fn traversability_edge_cases() {
        let mut cm = discretize(&room(), 2.0, 0.4).unwrap();
        cm.free = vec![false; 25];
        assert!(!is_traversable(&cm));
        cm.free[12] = true;
        assert!(is_traversable(&cm));
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(matches!(discretize(&room(), 0.0, 0.4), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(discretize(&room(), -1.0, 0.4), Err(Error::InvalidEpsilon(_))));
    }

    fn doorway_map() -> MapSpec {
        // divider at x in [5, 5.2] with a 1.1 m doorway at y in [4, 5.1]
        room().with_obstacles(vec![
            Obstacle::rect((5.0, 0.0), (5.2, 4.0)),
            Obstacle::rect((5.0, 5.1), (5.2, 10.0)),
        ])
    }

    #[test]
    fn fundamental_length_examples() {
        let cands = [2.0, 1.0, 0.5];
        assert_eq!(fundamental_length(&room(), &inspector(0.4, 1.0), &cands).unwrap(), Some(2.0));
        // oracle: run discretize at every candidate
        let door = doorway_map();
        let by_hand: Vec<bool> = cands
            .iter()
            .map(|&e| flood_connected(&discretize(&door, e, 0.4).unwrap()))
            .collect();
        assert_eq!(by_hand, vec![false, true, true]);
        assert_eq!(fundamental_length(&door, &inspector(0.4, 1.0), &cands).unwrap(), Some(1.0));
        assert_eq!(fundamental_length(&room(), &inspector(1.5, 3.0), &[1.0, 0.5]).unwrap(), None);
        assert!(matches!(
            fundamental_length(&room(), &inspector(0.4, 1.0), &[]),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn default_candidates_stop_at_inspector_size() {
        let c = default_candidates(&room(), &inspector(0.4, 1.0));
        assert_eq!(c[0], 10.0);
        assert!(c.iter().all(|&e| e >= 0.4));
        assert_eq!(c.len(), 25);
    }

    #[test]
    fn validity_bounds() {
        let cm = discretize(&room(), 0.7, 0.4).unwrap();
        let ok = validate(0.7, &inspector(0.4, 1.0), &cm);
        assert!(ok.satisfies_lower && ok.satisfies_upper && ok.traversable && ok.is_valid());
        let cm = discretize(&room(), 0.75, 0.4).unwrap();
        assert!(!validate(0.75, &inspector(0.4, 1.0), &cm).satisfies_upper);
        let cm = discretize(&room(), 0.3, 0.4).unwrap();
        assert!(!validate(0.3, &inspector(0.4, 1.0), &cm).satisfies_lower);
    }

    fn clutter() -> MapSpec {
        room().with_obstacles(vec![
            Obstacle::rect((1.3, 1.7), (3.1, 2.4)),
            Obstacle::circle((6.6, 6.2), 1.3),
            Obstacle::rect((7.5, 0.0), (8.0, 3.3)),
            Obstacle::circle((2.5, 7.5), 0.7),
        ])
    }

    #[test]
    fn free_bins_admit_a_placement() {
        let map = clutter();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for eps in [2.0, 1.0, 0.5] {
            let cm = discretize(&map, eps, 0.4).unwrap();
            for b in cm.free_bins() {
                let (lo, hi) = cm.bin_bounds(b);
                let found = (0..500).any(|_| {
                    let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                    map.is_free(p, 0.4)
                });
                assert!(found, "bin {b} at eps {eps} has no free placement");
            }
        }
    }

    #[test]
    fn coarse_free_bins_are_free_at_finer_scale() {
        let map = clutter();
        let coarse = discretize(&map, 2.0, 0.4).unwrap();
        let fine = discretize(&map, 1.0, 0.4).unwrap();
        for b in coarse.free_bins() {
            let (cx, cy) = coarse.coords(b);
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let sub = fine.index(2 * cx + dx, 2 * cy + dy);
                assert!(fine.free[sub], "coarse bin {b} free but sub-bin {sub} occupied");
            }
        }
    }

    #[test]
    fn traversability_matches_flood_fill() {
        let maps = [room(), clutter(), doorway_map()];
        for map in &maps {
            for eps in [2.5, 2.0, 1.0, 0.5] {
                let cm = discretize(map, eps, 0.4).unwrap();
                assert_eq!(is_traversable(&cm), flood_connected(&cm));
            }
        }
    }

    #[test]
    fn graph_radius_of_corner_and_center() {
        let cm = discretize(&room(), 2.0, 0.4).unwrap();
        assert_eq!(cm.graph_radius(cm.index(0, 0)), Some(8));
        assert_eq!(cm.graph_radius(cm.index(2, 2)), Some(4));
    }

    #[test]
    fn non_divisible_lengths_get_partial_bins() {
        let map = MapSpec::empty(10.0, 7.0, 1.0);
        let cm = discretize(&map, 2.0, 0.4).unwrap();
        assert_eq!((cm.nx, cm.ny), (5, 4));
        assert_eq!(cm.bin_of(Vec2::new(9.99, 6.99)), Some(19));
        assert_eq!(cm.bin_of(Vec2::new(10.0, 7.0)), Some(19));
        assert_eq!(cm.bin_of(Vec2::new(10.1, 1.0)), None);
    }
}
