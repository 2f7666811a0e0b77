//! Anchor clustering from ground-truth box dimensions.

/// Cluster `(w, h)` pairs into `2 * anchors_per_scale` shapes with seeded
/// Lloyd k-means, then split them by area: the larger half becomes the
/// coarse-scale anchors, the smaller half the fine-scale anchors.
///
/// Returns `[coarse, fine]`. Centroids are initialized on area quantiles of
/// the input, so the result is a pure function of the box list.
pub fn kmeans_anchors(dims: &[(f64, f64)], anchors_per_scale: usize) -> Vec<Vec<(f64, f64)>> {
    let k = 2 * anchors_per_scale;
    assert!(!dims.is_empty(), "anchor clustering needs at least one box");

    // initialize on area quantiles for determinism
    let mut by_area: Vec<(f64, f64)> = dims.to_vec();
    by_area.sort_by(|a, b| {
        (a.0 * a.1)
            .partial_cmp(&(b.0 * b.1))
            .unwrap()
            .then(a.0.partial_cmp(&b.0).unwrap())
    });
    let mut centroids: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let idx = (i * (by_area.len() - 1)) / (k - 1).max(1);
            by_area[idx]
        })
        .collect();

    let mut assignment = vec![0usize; dims.len()];
    for _iter in 0..100 {
        let mut changed = false;
        for (i, &(w, h)) in dims.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &(cw, ch)) in centroids.iter().enumerate() {
                let d = (w - cw).powi(2) + (h - ch).powi(2);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &(w, h)) in dims.iter().enumerate() {
            let s = &mut sums[assignment[i]];
            s.0 += w;
            s.1 += h;
            s.2 += 1;
        }
        for (c, s) in sums.iter().enumerate() {
            if s.2 > 0 {
                centroids[c] = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        if !changed {
            break;
        }
    }

    centroids.sort_by(|a, b| {
        (a.0 * a.1)
            .partial_cmp(&(b.0 * b.1))
            .unwrap()
            .then(a.0.partial_cmp(&b.0).unwrap())
    });
    // clamp degenerate clusters away from zero
    for c in centroids.iter_mut() {
        c.0 = c.0.max(1.0);
        c.1 = c.1.max(1.0);
    }
    let fine = centroids[..anchors_per_scale].to_vec();
    let coarse = centroids[anchors_per_scale..].to_vec();
    vec![coarse, fine]
}
