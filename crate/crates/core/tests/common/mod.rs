//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rootlet_levels::phantom::{Curvature, PhantomSpec, RootletSpec};
use rootlet_levels::volume::{Affine, Grid, LabelMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_grid(dims: [usize; 3]) -> Grid {
    Grid::with_spacing(dims, [1.0; 3]).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, grid: &Grid, density: f64) -> LabelMap {
    let data = (0..grid.len()).map(|_| u8::from(rng.random_bool(density))).collect();
    LabelMap::new(grid.clone(), data).unwrap()
}

pub struct OracleStaple {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub iterations: usize,
}

/// Direct transcription of the binary STAPLE E/M updates: voxel-by-voxel
/// likelihood products, fixed prior = mean rater foreground fraction,
/// p = q = 0.9999 at start, estimates clamped to [1e-7, 1 − 1e-7].
pub fn staple_oracle(raters: &[Vec<u8>], tol: f64, max_iter: usize) -> Option<OracleStaple> {
    let n = raters[0].len();
    let r = raters.len();
    let ones: usize = raters.iter().flatten().filter(|&&d| d != 0).count();
    if ones == 0 {
        return None;
    }
    let f = ones as f64 / (r * n) as f64;
    let clamp = |x: f64| x.clamp(1e-7, 1.0 - 1e-7);

    let e_step = |p: &[f64], q: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut a = f;
                let mut b = 1.0 - f;
                for j in 0..r {
                    if raters[j][i] != 0 {
                        a *= p[j];
                        b *= 1.0 - q[j];
                    } else {
                        a *= 1.0 - p[j];
                        b *= q[j];
                    }
                }
                a / (a + b)
            })
            .collect()
    };

    let mut p = vec![0.9999; r];
    let mut q = vec![0.9999; r];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let w = e_step(&p, &q);
        let sw: f64 = w.iter().sum();
        let sb: f64 = w.iter().map(|x| 1.0 - x).sum();
        let mut delta = 0.0f64;
        for j in 0..r {
            let tp: f64 = (0..n).filter(|&i| raters[j][i] != 0).map(|i| w[i]).sum();
            let tn: f64 = (0..n).filter(|&i| raters[j][i] == 0).map(|i| 1.0 - w[i]).sum();
            let np = if sw > 0.0 { clamp(tp / sw) } else { p[j] };
            let nq = if sb > 0.0 { clamp(tn / sb) } else { q[j] };
            delta = delta.max((np - p[j]).abs()).max((nq - q[j]).abs());
            p[j] = np;
            q[j] = nq;
        }
        if delta < tol {
            break;
        }
    }
    Some(OracleStaple {
        w: e_step(&p, &q),
        p,
        q,
        iterations,
    })
}

/// Number of lattice points with x² + y² + z² ≤ r².
pub fn ball_lattice_count(r: i64) -> usize {
    let mut n = 0;
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                if x * x + y * y + z * z <= r * r {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Gather-style dilation: an output voxel is set when any input voxel lies in
/// its footprint.
pub fn dilate_brute(mask: &LabelMap, inside: impl Fn(i64, i64, i64) -> bool, r: i64) -> Vec<u8> {
    let [nx, ny, nz] = mask.grid().dims();
    let mut out = vec![0u8; nx * ny * nz];
    for k in 0..nz as i64 {
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                'search: for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (x, y, z) = (i + dx, j + dy, k + dz);
                            if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
                                continue;
                            }
                            if inside(dx, dy, dz) && mask.get(x as usize, y as usize, z as usize) != 0 {
                                out[(i + nx as i64 * (j + ny as i64 * k)) as usize] = 1;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Dice of one class by explicit index sets.
pub fn dice_by_sets(pred: &LabelMap, truth: &LabelMap, class: u8) -> f64 {
    let a: HashSet<usize> = (0..pred.data().len()).filter(|&i| pred.data()[i] == class).collect();
    let b: HashSet<usize> = (0..truth.data().len()).filter(|&i| truth.data()[i] == class).collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * a.intersection(&b).count() as f64 / (a.len() + b.len()) as f64
}

/// Zero-noise, zero-angulation phantom with a random subset of levels.
pub fn random_phantom_spec(rng: &mut impl Rng, bowed: bool) -> PhantomSpec {
    let spacing = [0.6, 0.8, 1.0][rng.random_range(0..3)];
    let nz = rng.random_range(110..=170);
    let nxy = rng.random_range(40..=56);
    let pmj_slice = nz - 1 - rng.random_range(2..=6);
    let mut rootlets = Vec::new();
    let mut top = pmj_slice - rng.random_range(3..=8);
    for level in 2..=8u8 {
        let span = rng.random_range(4..=12);
        if top < span + 2 {
            break;
        }
        let caudal = top - span + 1;
        if rng.random_bool(0.85) {
            rootlets.push(RootletSpec {
                level,
                rostral_slice: top,
                caudal_slice: caudal,
                angulation_deg: Some(0.0),
                radius_mm: rng.random_range(0.4..0.8),
                length_mm: rng.random_range(4.0..7.0),
            });
        }
        top = match caudal.checked_sub(rng.random_range(2..=6)) {
            Some(t) => t,
            None => break,
        };
    }
    if rootlets.is_empty() {
        rootlets.push(RootletSpec {
            level: 5,
            rostral_slice: pmj_slice / 2 + 5,
            caudal_slice: pmj_slice / 2 - 5,
            angulation_deg: Some(0.0),
            radius_mm: 0.5,
            length_mm: 5.0,
        });
    }
    let curvature = if bowed {
        Curvature::Bowed {
            amplitude_mm: rng.random_range(-5.0..5.0),
        }
    } else {
        Curvature::Straight
    };
    PhantomSpec {
        dims: [nxy, nxy, nz],
        spacing_mm: spacing,
        cord_radius_mm: rng.random_range(3.0..4.0),
        curvature,
        rootlets,
        pmj_slice,
        noise_sd: 0.0,
        seed: rng.random(),
        allow_overlap: false,
    }
}

/// Eight affines covering distinct orientation codes, with an origin shift.
pub fn orientation_affines(spacing: [f64; 3]) -> Vec<Affine> {
    let perms: [([usize; 3], [f64; 3]); 8] = [
        ([0, 1, 2], [1.0, 1.0, 1.0]),
        ([0, 1, 2], [-1.0, -1.0, -1.0]),
        ([0, 1, 2], [-1.0, -1.0, 1.0]),
        ([0, 1, 2], [1.0, -1.0, 1.0]),
        ([1, 0, 2], [1.0, 1.0, 1.0]),
        ([0, 2, 1], [1.0, -1.0, 1.0]),
        ([2, 0, 1], [-1.0, 1.0, 1.0]),
        ([1, 2, 0], [1.0, 1.0, -1.0]),
    ];
    perms
        .iter()
        .map(|(perm, sign)| {
            let mut a = [[0.0; 4]; 4];
            for col in 0..3 {
                a[perm[col]][col] = sign[col] * spacing[col];
            }
            a[0][3] = -12.5;
            a[1][3] = 30.25;
            a[2][3] = 4.0;
            a[3][3] = 1.0;
            a
        })
        .collect()
}
