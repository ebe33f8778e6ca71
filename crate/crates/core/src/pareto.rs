//! Dominance, Pareto archive and exact three-objective hypervolume.
//!
//! All objectives are minimized.

use serde::{Deserialize, Serialize};

use crate::design_space::DesignPoint;
use crate::perf_model::PpaMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub [f64; 3]);

impl ObjectiveVector {
    pub const REFERENCE: ObjectiveVector = ObjectiveVector([1.0, 1.0, 1.0]);

    pub fn new(ttft_n: f64, tpot_n: f64, area_n: f64) -> Self {
        ObjectiveVector([ttft_n, tpot_n, area_n])
    }

    pub fn from_metrics(m: &PpaMetrics) -> Self {
        ObjectiveVector(m.normalized())
    }

    /// `self` is no worse everywhere and strictly better somewhere.
    pub fn dominates(&self, other: &ObjectiveVector) -> bool {
        dominates(self, other)
    }

    /// Strictly better in every objective.
    pub fn strictly_better(&self, other: &ObjectiveVector) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a < b)
    }
}

pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let mut strictly = false;
    for (x, y) in a.0.iter().zip(b.0.iter()) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub design: DesignPoint,
    pub objectives: ObjectiveVector,
    /// Trajectory step that first produced this design.
    pub step: usize,
}

/// Running non-dominated set, deduplicated by design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub entries: Vec<ArchiveEntry>,
    pub reference: ObjectiveVector,
}

impl Default for ParetoArchive {
    fn default() -> Self {
        ParetoArchive::new(ObjectiveVector::REFERENCE)
    }
}

impl ParetoArchive {
    pub fn new(reference: ObjectiveVector) -> Self {
        ParetoArchive {
            entries: Vec::new(),
            reference,
        }
    }

    /// Adds the point unless it is dominated or its design is already held.
    /// Returns whether it was added.
    pub fn insert(&mut self, design: DesignPoint, obj: ObjectiveVector, step: usize) -> bool {
        if self
            .entries
            .iter()
            .any(|e| e.design == design || dominates(&e.objectives, &obj))
        {
            return false;
        }
        self.entries.retain(|e| !dominates(&obj, &e.objectives));
        self.entries.push(ArchiveEntry {
            design,
            objectives: obj,
            step,
        });
        true
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.entries.iter().map(|e| e.objectives).collect()
    }

    pub fn hypervolume(&self) -> f64 {
        hypervolume(&self.objectives(), &self.reference)
    }
}

/// Exact volume of the union of boxes `[p, reference]`.
///
/// Points are clipped to the reference box first; a point at or beyond the
/// reference in any objective contributes nothing. Sweeps the third
/// objective and keeps a two-dimensional staircase of the points seen so far.
pub fn hypervolume(front: &[ObjectiveVector], reference: &ObjectiveVector) -> f64 {
    let r = reference.0;
    let mut pts: Vec<[f64; 3]> = front
        .iter()
        .map(|p| [p.0[0].max(0.0), p.0[1].max(0.0), p.0[2].max(0.0)])
        .filter(|p| p.iter().zip(r.iter()).all(|(a, b)| a < b))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));

    // (x, y) sorted by x ascending, y strictly descending.
    let mut stairs: Vec<(f64, f64)> = Vec::new();
    let mut volume = 0.0;
    for (i, p) in pts.iter().enumerate() {
        insert_staircase(&mut stairs, p[0], p[1]);
        let z_next = pts.get(i + 1).map_or(r[2], |q| q[2]);
        let depth = z_next - p[2];
        if depth > 0.0 {
            volume += staircase_area(&stairs, r[0], r[1]) * depth;
        }
    }
    volume
}

fn insert_staircase(stairs: &mut Vec<(f64, f64)>, x: f64, y: f64) {
    // dominated in 2D by an existing step?
    let pos = stairs.partition_point(|&(sx, _)| sx <= x);
    if pos > 0 && stairs[pos - 1].1 <= y {
        return;
    }
    // remove steps the new point covers: x' >= x and y' >= y
    let mut end = pos;
    while end < stairs.len() && stairs[end].1 >= y {
        end += 1;
    }
    let start = if pos > 0 && stairs[pos - 1].0 == x {
        pos - 1
    } else {
        pos
    };
    stairs.splice(start..end, std::iter::once((x, y)));
}

fn staircase_area(stairs: &[(f64, f64)], rx: f64, ry: f64) -> f64 {
    let mut area = 0.0;
    for (i, &(x, y)) in stairs.iter().enumerate() {
        let x_next = stairs.get(i + 1).map_or(rx, |s| s.0);
        area += (x_next - x) * (ry - y);
    }
    area
}

/// Fraction of samples strictly better than `reference` in every objective.
pub fn sample_efficiency(samples: &[ObjectiveVector], reference: &ObjectiveVector) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let better = samples
        .iter()
        .filter(|s| s.strictly_better(reference))
        .count();
    better as f64 / samples.len() as f64
}

/// Non-dominated sorting rank of every point (1 = first front).
pub fn nondominated_ranks(points: &[ObjectiveVector]) -> Vec<usize> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&points[i], &points[j]) {
                dominates_list[i].push(j);
            } else if i != j && dominates(&points[j], &points[i]) {
                dominated_by[i] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut level = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        current = next;
        level += 1;
    }
    rank
}

/// Crowding distance of each point within one front.
pub fn crowding_distance(points: &[ObjectiveVector]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..3 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| points[a].0[m].total_cmp(&points[b].0[m]));
        let lo = points[idx[0]].0[m];
        let hi = points[idx[n - 1]].0[m];
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n - 1 {
                let gap = points[idx[w + 1]].0[m] - points[idx[w - 1]].0[m];
                dist[idx[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(a: f64, b: f64, c: f64) -> ObjectiveVector {
        ObjectiveVector([a, b, c])
    }

    #[test]
    fn dominance_examples() {
        let one = ObjectiveVector::REFERENCE;
        assert!(dominates(&ov(0.5, 0.5, 0.5), &one));
        assert!(!dominates(&one, &one));
        // Design A over the A100
        assert!(dominates(&ov(0.717, 0.947, 0.772), &one));
    }

    #[test]
    fn archive_examples() {
        let d = |i: u32| DesignPoint::from_array([i; 8]);
        let mut a = ParetoArchive::default();
        a.insert(d(1), ov(1.0, 1.0, 1.0), 0);
        assert!(!a.insert(d(2), ov(2.0, 2.0, 2.0), 1));
        assert_eq!(a.entries.len(), 1);

        let mut b = ParetoArchive::default();
        assert!(b.insert(d(1), ov(0.5, 1.5, 1.0), 0));
        assert!(b.insert(d(2), ov(1.5, 0.5, 1.0), 1));
        assert_eq!(b.entries.len(), 2);
        assert!(b.insert(d(3), ov(0.4, 0.4, 0.4), 2));
        assert_eq!(b.objectives(), vec![ov(0.4, 0.4, 0.4)]);
        // same design never enters twice
        assert!(!b.insert(d(3), ov(0.1, 0.1, 0.1), 3));
    }

    #[test]
    fn hypervolume_examples() {
        let r = ObjectiveVector::REFERENCE;
        assert!((hypervolume(&[ov(0.5, 0.5, 0.5)], &r) - 0.125).abs() < 1e-15);
        assert!((hypervolume(&[ov(0.5, 0.5, 0.5), ov(0.5, 0.5, 0.5)], &r) - 0.125).abs() < 1e-15);
        assert_eq!(hypervolume(&[ov(1.0, 0.2, 0.2)], &r), 0.0);
        assert_eq!(hypervolume(&[], &r), 0.0);
        // two overlapping boxes: 0.5 + 0.5 - 0.25
        let hv = hypervolume(&[ov(0.0, 0.5, 0.0), ov(0.5, 0.0, 0.0)], &r);
        assert!((hv - 0.75).abs() < 1e-15);
    }

    #[test]
    fn staircase_handles_equal_x() {
        let r = ObjectiveVector::REFERENCE;
        let hv = hypervolume(&[ov(0.5, 0.8, 0.5), ov(0.5, 0.4, 0.5)], &r);
        assert!((hv - 0.5 * 0.6 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn efficiency_examples() {
        let r = ObjectiveVector::REFERENCE;
        let mut s = vec![ov(0.9, 0.9, 0.9); 421];
        s.extend(vec![ov(1.1, 0.9, 0.9); 579]);
        assert!((sample_efficiency(&s, &r) - 0.421).abs() < 1e-12);
        assert_eq!(sample_efficiency(&[ov(2.0, 2.0, 2.0)], &r), 0.0);
        assert_eq!(sample_efficiency(&[r, r], &r), 0.0);
    }

    #[test]
    fn ranks_and_crowding() {
        let pts = [
            ov(1.0, 2.0, 1.0),
            ov(2.0, 1.0, 1.0),
            ov(3.0, 3.0, 3.0),
            ov(4.0, 4.0, 4.0),
        ];
        assert_eq!(nondominated_ranks(&pts), vec![1, 1, 2, 3]);
        let line = [
            ov(1.0, 4.0, 0.0),
            ov(2.0, 3.0, 0.0),
            ov(3.0, 2.0, 0.0),
            ov(4.0, 1.0, 0.0),
        ];
        let cd = crowding_distance(&line);
        assert!(cd[0].is_infinite() && cd[3].is_infinite());
        assert!((cd[1] - 4.0 / 3.0).abs() < 1e-12);
        assert!((cd[2] - 4.0 / 3.0).abs() < 1e-12);
    }
}
