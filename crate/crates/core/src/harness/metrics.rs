//! Dice overlap and the 95th-percentile surface distance.
//!
//! HD95 here pools both directed surface-distance sets (prediction → truth
//! and truth → prediction) and takes one 95th percentile (linear
//! interpolation between order statistics) over the pooled set. It is not
//! the maximum of the two directed percentiles.

use std::fmt;

/// `100·2|P∩G| / (|P| + |G|)` for one class; 100 when both are empty.
pub fn dice_metric(pred: &[usize], truth: &[usize], class: usize) -> f64 {
    assert_eq!(pred.len(), truth.len(), "label volumes differ in size");
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(truth) {
        let (a, b) = (p == class, g == class);
        np += a as usize;
        ng += b as usize;
        inter += (a && b) as usize;
    }
    if np + ng == 0 {
        100.0
    } else {
        100.0 * 2.0 * inter as f64 / (np + ng) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hd95 {
    Millimeters(f64),
    /// One mask is empty and the other is not.
    Failure,
}

impl Hd95 {
    pub fn value(self) -> Option<f64> {
        match self {
            Hd95::Millimeters(v) => Some(v),
            Hd95::Failure => None,
        }
    }
}

impl fmt::Display for Hd95 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hd95::Millimeters(v) => write!(f, "{v:.3}"),
            Hd95::Failure => write!(f, "FAILURE"),
        }
    }
}

/// Voxels of `class` with at least one 6-neighbor outside the class; the
/// volume border counts as outside.
pub fn surface(labels: &[usize], dims: [usize; 3], class: usize) -> Vec<bool> {
    let [d, h, w] = dims;
    let at = |z: usize, y: usize, x: usize| labels[(z * h + y) * w + x] == class;
    let mut out = vec![false; labels.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !at(z, y, x) {
                    continue;
                }
                let border = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                out[(z * h + y) * w + x] = border
                    || !at(z - 1, y, x)
                    || !at(z + 1, y, x)
                    || !at(z, y - 1, x)
                    || !at(z, y + 1, x)
                    || !at(z, y, x - 1)
                    || !at(z, y, x + 1);
            }
        }
    }
    out
}

/// Lower envelope of parabolas `w²(q − p)² + f[p]` over the finite entries
/// of `f`, written to `out`.
fn edt_1d(f: &[f64], w2: f64, out: &mut [f64]) {
    let sites: Vec<usize> = (0..f.len()).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let meet = |a: usize, b: usize| {
        let (fa, fb) = (f[a] + w2 * (a * a) as f64, f[b] + w2 * (b * b) as f64);
        (fb - fa) / (2.0 * w2 * (b as f64 - a as f64))
    };
    // bounds[i] is where hull[i + 1] takes over from hull[i].
    let mut hull = vec![sites[0]];
    let mut bounds: Vec<f64> = Vec::with_capacity(sites.len());
    for &q in &sites[1..] {
        loop {
            let s = meet(*hull.last().unwrap(), q);
            match bounds.last() {
                Some(&b) if s <= b => {
                    hull.pop();
                    bounds.pop();
                }
                _ => {
                    bounds.push(s);
                    hull.push(q);
                    break;
                }
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k < bounds.len() && bounds[k] < q as f64 {
            k += 1;
        }
        let p = hull[k];
        let dq = q as f64 - p as f64;
        *o = w2 * dq * dq + f[p];
    }
}

/// Squared Euclidean distance (with per-axis spacing) from every voxel to
/// the nearest `true` site.
pub fn squared_distance_transform(sites: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = dims;
    let mut g: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [h * w, w, 1];
    for axis in 0..3 {
        let n = dims[axis];
        let w2 = spacing[axis] * spacing[axis];
        let (mut line, mut res) = (vec![0.0; n], vec![0.0; n]);
        for base in 0..d * h * w {
            // Visit each line once, from its first element.
            if (base / strides[axis]) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = g[base + i * strides[axis]];
            }
            edt_1d(&line, w2, &mut res);
            for i in 0..n {
                g[base + i * strides[axis]] = res[i];
            }
        }
    }
    g
}

/// Linear-interpolated percentile `q ∈ [0, 100]` of unsorted values.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

pub fn hd95_metric(pred: &[usize], truth: &[usize], dims: [usize; 3], class: usize, spacing: [f64; 3]) -> Hd95 {
    assert_eq!(pred.len(), truth.len(), "label volumes differ in size");
    let sp = surface(pred, dims, class);
    let sg = surface(truth, dims, class);
    let (any_p, any_g) = (sp.contains(&true), sg.contains(&true));
    match (any_p, any_g) {
        (false, false) => return Hd95::Millimeters(0.0),
        (true, false) | (false, true) => return Hd95::Failure,
        _ => {}
    }
    let to_g = squared_distance_transform(&sg, dims, spacing);
    let to_p = squared_distance_transform(&sp, dims, spacing);
    let mut pooled: Vec<f64> = Vec::new();
    for i in 0..sp.len() {
        if sp[i] {
            pooled.push(to_g[i].sqrt());
        }
        if sg[i] {
            pooled.push(to_p[i].sqrt());
        }
    }
    Hd95::Millimeters(percentile(&mut pooled, 95.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(dims: [usize; 3], at: [usize; 3]) -> Vec<usize> {
        let mut v = vec![0; dims.iter().product()];
        v[(at[0] * dims[1] + at[1]) * dims[2] + at[2]] = 1;
        v
    }

    #[test]
    fn dice_examples() {
        let a: Vec<usize> = (0..16).map(|i| (i < 8) as usize).collect();
        assert_eq!(dice_metric(&a, &a, 1), 100.0);
        let b: Vec<usize> = (0..16).map(|i| (i >= 8) as usize).collect();
        assert_eq!(dice_metric(&a, &b, 1), 0.0);
        let c: Vec<usize> = (0..16).map(|i| (4..12).contains(&i) as usize).collect();
        assert_eq!(dice_metric(&a, &c, 1), 50.0);
        assert_eq!(dice_metric(&[0, 0], &[0, 0], 1), 100.0);
    }

    #[test]
    fn hd95_examples() {
        let dims = [8, 8, 8];
        let p = single(dims, [2, 4, 4]);
        assert_eq!(hd95_metric(&p, &p, dims, 1, [1.0; 3]), Hd95::Millimeters(0.0));
        let g = single(dims, [5, 4, 4]);
        assert_eq!(hd95_metric(&p, &g, dims, 1, [1.0; 3]), Hd95::Millimeters(3.0));
        assert_eq!(hd95_metric(&p, &g, dims, 1, [2.0, 1.0, 1.0]), Hd95::Millimeters(6.0));
        assert_eq!(hd95_metric(&vec![0; 512], &g, dims, 1, [1.0; 3]), Hd95::Failure);
        assert_eq!(Hd95::Failure.to_string(), "FAILURE");
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let dims = [5, 6, 7];
        let n = 5 * 6 * 7;
        let spacing = [1.5, 0.7, 1.0];
        let mut s = 12345u64;
        for _ in 0..10 {
            let sites: Vec<bool> = (0..n)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 60) == 0
                })
                .collect();
            let got = squared_distance_transform(&sites, dims, spacing);
            for i in 0..n {
                let c = [i / 42, (i / 7) % 6, i % 7];
                let mut best = f64::INFINITY;
                for j in (0..n).filter(|&j| sites[j]) {
                    let e = [j / 42, (j / 7) % 6, j % 7];
                    let d: f64 = (0..3).map(|a| ((c[a] as f64 - e[a] as f64) * spacing[a]).powi(2)).sum();
                    best = best.min(d);
                }
                assert!(got[i] == best || (got[i] - best).abs() < 1e-12, "{i}: {} vs {best}", got[i]);
            }
        }
    }

    #[test]
    fn surface_of_filled_cube() {
        let dims = [5, 5, 5];
        let labels: Vec<usize> = (0..125)
            .map(|i| {
                let c = [i / 25, (i / 5) % 5, i % 5];
                c.iter().all(|&v| (1..4).contains(&v)) as usize
            })
            .collect();
        let s = surface(&labels, dims, 1);
        assert_eq!(s.iter().filter(|&&b| b).count(), 26);
        assert!(!s[(2 * 5 + 2) * 5 + 2]);
    }
}
