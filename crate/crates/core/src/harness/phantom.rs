//! Synthetic labeled volumes built from spheres, boxes and tubes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{FeError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    /// Axis-aligned box with the given half extents.
    Box { half: [f64; 3] },
    /// Cylinder along `axis` (0 = depth, 1 = height, 2 = width).
    Tube { radius: f64, half_len: f64, axis: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Voxel coordinates (voxel `i` is centered at `i`).
    pub center: [f64; 3],
    pub class: usize,
    pub intensity: f64,
}

impl ShapeSpec {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        match self.kind {
            ShapeKind::Sphere { radius } => d.iter().map(|x| x * x).sum::<f64>() <= radius * radius,
            ShapeKind::Box { half } => d.iter().zip(half).all(|(x, h)| x.abs() <= h),
            ShapeKind::Tube { radius, half_len, axis } => {
                let r2: f64 = (0..3).filter(|&a| a != axis).map(|a| d[a] * d[a]).sum();
                r2 <= radius * radius && d[axis].abs() <= half_len
            }
        }
    }

    /// Half extent of the bounding box along each axis.
    fn reach(&self) -> [f64; 3] {
        match self.kind {
            ShapeKind::Sphere { radius } => [radius; 3],
            ShapeKind::Box { half } => half,
            ShapeKind::Tube { radius, half_len, axis } => {
                let mut r = [radius; 3];
                r[axis] = half_len;
                r
            }
        }
    }

    fn validate(&self, e: usize) -> Result<()> {
        let size_ok = match self.kind {
            ShapeKind::Sphere { radius } => radius > 0.0,
            ShapeKind::Box { half } => half.iter().all(|&h| h > 0.0),
            ShapeKind::Tube { radius, half_len, axis } => radius > 0.0 && half_len > 0.0 && axis < 3,
        };
        if !size_ok {
            return Err(FeError::Invalid(format!("degenerate shape {:?}", self.kind)));
        }
        let reach = self.reach();
        for a in 0..3 {
            if self.center[a] - reach[a] < 0.0 || self.center[a] + reach[a] > (e - 1) as f64 {
                return Err(FeError::Invalid(format!(
                    "shape {:?} at {:?} does not fit in {e}^3",
                    self.kind, self.center
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    /// (1, 1, E, E, E) intensities in [0, 1].
    pub volume: Tensor,
    /// E³ labels in (d, h, w) order; 0 is background.
    pub labels: Vec<usize>,
    pub extent: usize,
    pub shapes: Vec<ShapeSpec>,
}

pub const BACKGROUND_INTENSITY: f64 = 0.1;

impl Phantom {
    /// Rasterizes `shapes` in order (later shapes overwrite earlier ones)
    /// onto a constant background. No texture is added.
    pub fn from_shapes(extent: usize, shapes: Vec<ShapeSpec>) -> Result<Phantom> {
        let e = extent;
        let mut intensity = vec![BACKGROUND_INTENSITY; e * e * e];
        let mut labels = vec![0usize; e * e * e];
        let mut owner = vec![usize::MAX; e * e * e];
        for (k, s) in shapes.iter().enumerate() {
            s.validate(e)?;
            if s.class == 0 {
                return Err(FeError::Invalid("shapes must carry a foreground class".into()));
            }
            for z in 0..e {
                for y in 0..e {
                    for x in 0..e {
                        if s.contains([z as f64, y as f64, x as f64]) {
                            let i = (z * e + y) * e + x;
                            intensity[i] = s.intensity;
                            labels[i] = s.class;
                            owner[i] = k;
                        }
                    }
                }
            }
        }
        for k in 0..shapes.len() {
            if !owner.contains(&k) {
                return Err(FeError::Invalid(format!("shape {k} has no visible voxels")));
            }
        }
        let volume = Tensor::new(&[1, 1, e, e, e], intensity)?;
        Ok(Phantom { volume, labels, extent: e, shapes })
    }

    pub fn count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// Class intensity on a fixed ladder between background and 1.
pub fn class_intensity(class: usize, n_classes: usize) -> f64 {
    0.3 + 0.6 * (class - 1) as f64 / (n_classes.max(3) - 2) as f64
}

/// `count` phantoms of extent `e`, each with one shape per foreground class,
/// plus mild Gaussian texture. Deterministic under `seed`.
pub fn phantom_generate(seed: u64, e: usize, n_classes: usize, count: usize) -> Result<Vec<Phantom>> {
    if n_classes < 2 {
        return Err(FeError::Invalid("need at least one foreground class".into()));
    }
    if e < 16 {
        return Err(FeError::Invalid(format!("extent {e} too small for phantoms (minimum 16)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = Normal::new(0.0, 0.02).unwrap();
    let ef = e as f64;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut shapes = Vec::new();
        for class in 1..n_classes {
            let kind = match rng.gen_range(0..3) {
                0 => ShapeKind::Sphere { radius: rng.gen_range(ef / 8.0..ef / 4.5) },
                1 => ShapeKind::Box {
                    half: [0; 3].map(|_| rng.gen_range(ef / 10.0..ef / 5.0)),
                },
                _ => ShapeKind::Tube {
                    radius: rng.gen_range(ef / 14.0..ef / 8.0),
                    half_len: rng.gen_range(ef / 6.0..ef / 3.0),
                    axis: rng.gen_range(0..3),
                },
            };
            let probe = ShapeSpec { kind, center: [0.0; 3], class, intensity: 0.0 };
            let reach = probe.reach();
            let center = [0, 1, 2].map(|a| rng.gen_range(reach[a] + 1.0..ef - 2.0 - reach[a]));
            shapes.push(ShapeSpec { center, intensity: class_intensity(class, n_classes), ..probe });
        }
        // Overlaps can hide a shape entirely; draw again in that case.
        let Ok(mut p) = Phantom::from_shapes(e, shapes) else { continue };
        for v in p.volume.data_mut() {
            *v = (*v + texture.sample(&mut rng)).clamp(0.0, 1.0);
        }
        out.push(p);
    }
    Ok(out)
}
