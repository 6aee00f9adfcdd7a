//! Farthest-point sampling for diverse example selection.

use crate::embedding::EmbeddingVector;

/// Greedily select `n` indices into `points`, starting at `start`; each
/// step adds the point maximizing the minimum L2 distance to the
/// selected set, breaking ties toward the smaller id.
pub fn farthest_point_sample(
    points: &[(&str, &EmbeddingVector)],
    n: usize,
    start: usize,
) -> Vec<usize> {
    assert!(start < points.len(), "start index out of range");
    let n = n.min(points.len());
    if n == 0 {
        return Vec::new();
    }

    let mut selected = Vec::with_capacity(n);
    selected.push(start);
    // Min distance from each point to the selected set so far.
    let mut min_dist: Vec<f64> =
        points.iter().map(|(_, v)| v.l2_distance(points[start].1)).collect();

    while selected.len() < n {
        let mut best: Option<usize> = None;
        for (i, (id, _)) in points.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            best = Some(match best {
                None => i,
                Some(b) => {
                    let (bd, bid) = (min_dist[b], points[b].0);
                    if min_dist[i] > bd || (min_dist[i] == bd && *id < bid) {
                        i
                    } else {
                        b
                    }
                }
            });
        }
        let next = best.expect("n <= points.len()");
        selected.push(next);
        for (i, (_, v)) in points.iter().enumerate() {
            let d = v.l2_distance(points[next].1);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    selected
}
