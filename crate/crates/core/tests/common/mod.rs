#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxelkd::camera::{CameraModel, DepthMap, LabelImage};
use voxelkd::distill::{LossResult, Mode};
use voxelkd::grid::{ChannelGrid, GridSpec, LabelGrid, IGNORE_LABEL};
use voxelkd::metrics::EvalMask;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let r = if axis.norm() < 1e-6 {
        Rotation3::identity()
    } else {
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
    };
    let m = r.matrix();
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

pub fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

/// Translation placing the camera center at `center`: `t = -R c`.
pub fn translation_for(r: &[[f64; 3]; 3], center: [f64; 3]) -> [f64; 3] {
    mat_vec(r, center).map(|x| -x)
}

/// Random pinhole camera whose optical axis passes near `target`, which lies
/// 1 to 4 m in front of it.
pub fn random_camera(rng: &mut ChaCha8Rng, size: (usize, usize), target: [f64; 3]) -> CameraModel {
    let r = random_rotation(rng);
    let dist = rng.gen_range(1.0..4.0);
    let jitter: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.3..0.3));
    let center: [f64; 3] = std::array::from_fn(|a| target[a] + jitter[a] - r[2][a] * dist);
    let fx = rng.gen_range(100.0..600.0);
    let fy = fx * rng.gen_range(0.9..1.1);
    let cx = (size.0 as f64 - 1.0) / 2.0 + rng.gen_range(-5.0..5.0);
    let cy = (size.1 as f64 - 1.0) / 2.0 + rng.gen_range(-5.0..5.0);
    CameraModel::pinhole(fx, fy, cx, cy, r, translation_for(&r, center), size).unwrap()
}

pub fn random_channels(rng: &mut ChaCha8Rng, spec: GridSpec, channels: usize, scale: f64) -> ChannelGrid {
    let values = (0..spec.num_voxels() * channels).map(|_| rng.gen_range(-scale..scale)).collect();
    ChannelGrid::new(spec, channels, values).unwrap()
}

/// Labels in `0..=num_classes`, with roughly `ignore_rate` of them ignored.
pub fn random_labels(rng: &mut ChaCha8Rng, spec: GridSpec, num_classes: usize, ignore_rate: f64) -> LabelGrid {
    let labels = (0..spec.num_voxels())
        .map(|_| if rng.gen_bool(ignore_rate) { IGNORE_LABEL } else { rng.gen_range(0..=num_classes as u8) })
        .collect();
    LabelGrid::new(spec, num_classes, labels).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: [usize; 3]) -> [usize; 3] {
    max.map(|m| rng.gen_range(1..=m))
}

/// Central finite differences of `f` along every input coordinate.
pub fn numeric_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a - n| / max(max |a|, max |n|)`; zero when both vanish.
pub fn relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn grid_from(like: &ChannelGrid, values: &[f64]) -> ChannelGrid {
    ChannelGrid::new(*like.spec(), like.channels(), values.to_vec()).unwrap()
}

pub fn value_of(r: voxelkd::Result<LossResult>) -> f64 {
    r.unwrap().value
}

pub const GRAD: Mode = Mode::ValueAndGradient;

/// Independent per-pixel counting of both noise statistics.
pub struct NoiseOracle {
    pub zero: Vec<Option<f64>>,
    pub delta: Vec<Option<f64>>,
}

pub fn noise_oracle(
    clean: &DepthMap,
    noisy: &DepthMap,
    clean_labels: &LabelImage,
    noisy_labels: &LabelImage,
    num_classes: usize,
) -> NoiseOracle {
    let k = num_classes + 1;
    let (w, h) = clean.size();
    let mut zero = Vec::with_capacity(k);
    for c in 0..k {
        let mut support = 0u64;
        let mut hits = 0u64;
        for v in 0..h {
            for u in 0..w {
                if clean.get(u, v) > 0.0 && clean_labels.get(u, v) as usize == c {
                    support += 1;
                    if noisy.get(u, v) == 0.0 {
                        hits += 1;
                    }
                }
            }
        }
        zero.push(if support == 0 { None } else { Some(hits as f64 / support as f64) });
    }
    let mut delta = Vec::with_capacity(k * k);
    for c in 0..k {
        for cn in 0..k {
            let mut support = 0u64;
            let mut hits = 0u64;
            for v in 0..h {
                for u in 0..w {
                    let both = clean.get(u, v) > 0.0 && noisy.get(u, v) > 0.0;
                    if both && clean_labels.get(u, v) as usize == c {
                        support += 1;
                        if cn != c && noisy_labels.get(u, v) as usize == cn {
                            hits += 1;
                        }
                    }
                }
            }
            delta.push(if support == 0 { None } else { Some(hits as f64 / support as f64) });
        }
    }
    NoiseOracle { zero, delta }
}

/// Confusion-matrix metrics oracle: `(sc tp, fp, fn)` and per-class
/// `(tp, fp, fn)` for classes `1..=C`.
pub struct MetricsOracle {
    pub sc: (u64, u64, u64),
    pub ssc: Vec<(u64, u64, u64)>,
}

pub fn metrics_oracle(pred: &LabelGrid, gt: &LabelGrid, mask: &EvalMask, num_classes: usize) -> MetricsOracle {
    let k = num_classes + 1;
    // Row = gt, column = pred, with ignored predictions folded into empty.
    let mut sc_conf = [[0u64; 2]; 2];
    let mut conf = vec![vec![0u64; k]; k];
    for i in 0..gt.labels().len() {
        let g = gt.labels()[i];
        if g == IGNORE_LABEL || !mask.counted()[i] {
            continue;
        }
        let p = match pred.labels()[i] {
            IGNORE_LABEL => 0,
            p => p,
        };
        conf[g as usize][p as usize] += 1;
        if mask.occluded()[i] {
            sc_conf[(g != 0) as usize][(p != 0) as usize] += 1;
        }
    }
    let sc = (sc_conf[1][1], sc_conf[0][1], sc_conf[1][0]);
    let ssc = (1..k)
        .map(|c| {
            let tp = conf[c][c];
            let fp: u64 = (0..k).filter(|&g| g != c).map(|g| conf[g][c]).sum();
            let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| conf[c][p]).sum();
            (tp, fp, fn_)
        })
        .collect();
    MetricsOracle { sc, ssc }
}

pub fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Brute-force TSDF: nearest surface voxel by exhaustive search, sign by
/// projecting each voxel center through the camera by hand.
pub fn tsdf_oracle(
    cam: &CameraModel,
    depth: &DepthMap,
    spec: &GridSpec,
    surface: &[[usize; 3]],
    truncation: f64,
) -> Vec<f64> {
    let g = spec.voxel_size();
    (0..spec.num_voxels())
        .map(|i| {
            let c = spec.coord_of(i);
            if surface.contains(&c) {
                return 0.0;
            }
            let best = surface
                .iter()
                .map(|s| {
                    (0..3).map(|a| (c[a] as i64 - s[a] as i64).pow(2)).sum::<i64>()
                })
                .min();
            let magnitude = match best {
                Some(d2) => (g * (d2 as f64).sqrt()).min(truncation),
                None => truncation,
            };
            let free = hand_free_space(cam, depth, spec.voxel_center(c));
            (if free { magnitude } else { -magnitude }) / truncation
        })
        .collect()
}

fn hand_free_space(cam: &CameraModel, depth: &DepthMap, p: [f64; 3]) -> bool {
    let r = cam.rotation();
    let t = cam.translation();
    let k = cam.intrinsics();
    let q = mat_vec(&r, p);
    let cp = [q[0] + t[0], q[1] + t[1], q[2] + t[2]];
    if cp[2] <= 0.0 {
        return false;
    }
    let h = mat_vec(&k, cp);
    let (u, v) = (h[0] / h[2], h[1] / h[2]);
    let (col, row) = ((u + 0.5).floor(), (v + 0.5).floor());
    let (w, hgt) = depth.size();
    if col < 0.0 || row < 0.0 || col >= w as f64 || row >= hgt as f64 {
        return false;
    }
    let d = depth.get(col as usize, row as usize);
    d > 0.0 && cp[2] < d
}

/// A closed box room: floor (y = 0), ceiling (y = top), four walls, plus a
/// few furniture blocks. Returns the grid and a camera center in free space.
pub fn random_room(rng: &mut ChaCha8Rng, dims: [usize; 3], voxel: f64) -> (LabelGrid, [f64; 3]) {
    let spec = GridSpec::new(dims, voxel, [0.0; 3]).unwrap();
    let mut labels = vec![0u8; spec.num_voxels()];
    let [nx, ny, nz] = dims;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let label = if y == 0 {
                    2
                } else if y == ny - 1 {
                    1
                } else if x == 0 || z == 0 || x == nx - 1 || z == nz - 1 {
                    if rng.gen_bool(0.05) {
                        4
                    } else {
                        3
                    }
                } else {
                    0
                };
                labels[spec.linear_index([x as i64, y as i64, z as i64]).unwrap()] = label;
            }
        }
    }
    for _ in 0..rng.gen_range(1..=4) {
        let class = rng.gen_range(5..=11u8);
        let size = [rng.gen_range(1..=4), rng.gen_range(1..=ny / 2), rng.gen_range(1..=4)];
        let at = [rng.gen_range(1..nx - size[0]), 1, rng.gen_range(1..nz - size[2])];
        for x in at[0]..at[0] + size[0] {
            for y in at[1]..at[1] + size[1] {
                for z in at[2]..at[2] + size[2] {
                    labels[spec.linear_index([x as i64, y as i64, z as i64]).unwrap()] = class;
                }
            }
        }
    }
    let grid = LabelGrid::new(spec, 11, labels).unwrap();
    loop {
        let c = [
            rng.gen_range(1.5..nx as f64 - 2.5) * voxel,
            rng.gen_range(1.5..ny as f64 - 2.5) * voxel,
            rng.gen_range(1.5..nz as f64 - 2.5) * voxel,
        ];
        let coord = voxelkd::camera::point_to_voxel(&spec, c).unwrap();
        let clear = (0..27).all(|k| {
            let n = [coord[0] as i64 + k % 3 - 1, coord[1] as i64 + (k / 3) % 3 - 1, coord[2] as i64 + k / 9 - 1];
            spec.linear_index(n).is_some_and(|i| grid.labels()[i] == 0)
        });
        if clear {
            return (grid, c);
        }
    }
}
