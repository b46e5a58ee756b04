//! Mirroring, additive Gaussian noise and brightness shifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Phantom;

pub const MIRROR_P: f64 = 0.5;
pub const NOISE_VAR_MAX: f64 = 0.1;
pub const BRIGHTNESS_P: f64 = 0.15;
pub const BRIGHTNESS_MAX: f64 = 0.1;

/// One set of random choices for [`apply_augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub mirror: [bool; 3],
    pub noise_var: f64,
    pub brightness: Option<f64>,
    pub noise_seed: u64,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        AugmentDraw { mirror: [false; 3], noise_var: 0.0, brightness: None, noise_seed: 0 }
    }

    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mirror = [0; 3].map(|_| rng.gen_bool(MIRROR_P));
        let noise_var = rng.gen_range(0.0..NOISE_VAR_MAX);
        let brightness = rng.gen_bool(BRIGHTNESS_P).then(|| rng.gen_range(-BRIGHTNESS_MAX..=BRIGHTNESS_MAX));
        AugmentDraw { mirror, noise_var, brightness, noise_seed: rng.gen() }
    }
}

/// Reverses the cube `data` (extent `e`) along each flagged axis.
pub fn mirror<T: Copy>(data: &[T], e: usize, axes: [bool; 3]) -> Vec<T> {
    let mut out = data.to_vec();
    for z in 0..e {
        for y in 0..e {
            for x in 0..e {
                let s = [z, y, x];
                let f = [0, 1, 2].map(|a| if axes[a] { e - 1 - s[a] } else { s[a] });
                out[(z * e + y) * e + x] = data[(f[0] * e + f[1]) * e + f[2]];
            }
        }
    }
    out
}

pub fn apply_augment(p: &Phantom, draw: &AugmentDraw) -> Phantom {
    let e = p.extent;
    let mut vol = mirror(p.volume.data(), e, draw.mirror);
    let labels = mirror(&p.labels, e, draw.mirror);
    if draw.noise_var > 0.0 {
        let sd = draw.noise_var.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(draw.noise_seed);
        for v in &mut vol {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += sd * n;
        }
    }
    if let Some(b) = draw.brightness {
        for v in &mut vol {
            *v += b;
        }
    }
    let mut volume = p.volume.clone();
    volume.data_mut().copy_from_slice(&vol);
    Phantom { volume, labels, extent: e, shapes: p.shapes.clone() }
}

pub fn augment(p: &Phantom, seed: u64) -> Phantom {
    apply_augment(p, &AugmentDraw::sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{dice_metric, phantom_generate};

    fn sample() -> Phantom {
        phantom_generate(3, 32, 3, 1).unwrap().remove(0)
    }

    #[test]
    fn identity_draw_is_identity() {
        let p = sample();
        assert_eq!(apply_augment(&p, &AugmentDraw::identity()), p);
    }

    #[test]
    fn double_mirror_restores() {
        let p = sample();
        for axis in 0..3 {
            let mut axes = [false; 3];
            axes[axis] = true;
            let d = AugmentDraw { mirror: axes, ..AugmentDraw::identity() };
            let once = apply_augment(&p, &d);
            assert_ne!(once.volume, p.volume);
            assert_eq!(apply_augment(&once, &d), p);
        }
    }

    #[test]
    fn labels_follow_intensities() {
        let p = sample();
        let d = AugmentDraw { mirror: [true, false, true], ..AugmentDraw::identity() };
        let m = apply_augment(&p, &d);
        let back = mirror(&m.labels, 32, d.mirror);
        for c in 0..3 {
            assert_eq!(dice_metric(&back, &p.labels, c), 100.0);
        }
        let fg = m.labels.iter().zip(m.volume.data()).filter(|(l, _)| **l == 2);
        assert!(fg.map(|(_, v)| *v).all(|v| v > 0.8));
    }

    #[test]
    fn draws_are_deterministic_and_in_range() {
        let mut bright = 0;
        for s in 0..2000 {
            let d = AugmentDraw::sample(s);
            assert_eq!(d, AugmentDraw::sample(s));
            assert!((0.0..NOISE_VAR_MAX).contains(&d.noise_var));
            if let Some(b) = d.brightness {
                assert!(b.abs() <= BRIGHTNESS_MAX);
                bright += 1;
            }
        }
        // 0.15 · 2000 = 300, σ ≈ 16.
        assert!((230..370).contains(&bright), "{bright}");
    }
}
