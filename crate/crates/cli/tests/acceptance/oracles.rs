//! Brute-force reference computations, independent of the library code paths.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::{SQRT_2, TAU};

use devnav_core::geometry::Pose;
use devnav_core::planning::{angle_diff, wrap_angle, OccupancyGrid};
use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use rand::Rng;

pub fn homogeneous(p: &Pose) -> Matrix4<f64> {
    let [w, x, y, z] = p.wxyz();
    let t = p.translation();
    Matrix4::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        t.x,
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        t.y,
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
        t.z,
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

fn inv(m: &Matrix4<f64>) -> Matrix4<f64> {
    m.try_inverse().unwrap()
}

fn trans_norm(m: &Matrix4<f64>) -> f64 {
    Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]).norm()
}

fn angle_deg(m: &Matrix4<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    skew.norm().atan2(tr - 1.0).to_degrees()
}

/// `(translation m, rotation deg)` per frame pair.
pub fn rpe(gt: &[Pose], est: &[Pose], delta: usize) -> Vec<(f64, f64)> {
    (0..gt.len() - delta)
        .map(|i| {
            let q = inv(&homogeneous(&gt[i])) * homogeneous(&gt[i + delta]);
            let p = inv(&homogeneous(&est[i])) * homogeneous(&est[i + delta]);
            let e = inv(&q) * p;
            (trans_norm(&e), angle_deg(&e))
        })
        .collect()
}

/// Horn's quaternion method: the rotation is the dominant eigenvector of a
/// 4×4 symmetric matrix built from the cross-covariance.
pub fn horn_align(reference: &[Vector3<f64>], source: &[Vector3<f64>]) -> Matrix4<f64> {
    let n = reference.len() as f64;
    let mr = reference.iter().sum::<Vector3<f64>>() / n;
    let ms = source.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::zeros();
    for (r, p) in reference.iter().zip(source) {
        s += (p - ms) * (r - mr).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let q = eig.eigenvectors.column(eig.eigenvalues.imax());
    let rot = Pose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::zeros()).unwrap();
    let r = homogeneous(&rot).fixed_view::<3, 3>(0, 0).into_owned();
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(mr - r * ms));
    m
}

pub fn ate(gt: &[Pose], est: &[Pose]) -> Vec<f64> {
    let r: Vec<_> = gt.iter().map(|p| *p.translation()).collect();
    let s: Vec<_> = est.iter().map(|p| *p.translation()).collect();
    let sm = horn_align(&r, &s);
    gt.iter()
        .zip(est)
        .map(|(q, p)| trans_norm(&(inv(&homogeneous(q)) * sm * homogeneous(p))))
        .collect()
}

pub fn random_pose(rng: &mut impl Rng, spread: f64) -> Pose {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
    Pose::from_axis_angle(
        axis,
        rng.gen_range(-3.0..3.0),
        Vector3::new(
            rng.gen_range(-spread..spread),
            rng.gen_range(-spread..spread),
            rng.gen_range(-spread..spread),
        ),
    )
}

/// Ground truth and a perturbed estimate, 6 to 50 poses.
pub fn random_pair(rng: &mut impl Rng) -> (Vec<Pose>, Vec<Pose>) {
    let n = rng.gen_range(6..=50);
    let gt: Vec<Pose> = (0..n).map(|_| random_pose(rng, 5.0)).collect();
    let est: Vec<Pose> = gt.iter().map(|p| *p * random_pose(rng, 0.3)).collect();
    (gt, est)
}

#[derive(PartialEq, Clone, Copy)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// 8-connected Dijkstra without corner cutting; returns the optimal
/// (cardinal, diagonal) step counts.
pub fn dijkstra(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Option<(u32, u32)> {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let free = |c: isize, r: isize| c >= 0 && r >= 0 && c < w && r < h && grid.get((c as usize, r as usize)) < 0.5;
    let cost = |k: (u32, u32)| k.0 as f64 + SQRT_2 * k.1 as f64;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; (w * h) as usize];
    let mut heap = BinaryHeap::new();
    best[(start.1 as isize * w + start.0 as isize) as usize] = Some((0, 0));
    heap.push((Reverse(Key(0.0)), start.0 as isize, start.1 as isize, (0u32, 0u32)));
    while let Some((Reverse(d), c, r, k)) = heap.pop() {
        if d.0 > cost(best[(r * w + c) as usize].unwrap()) {
            continue;
        }
        if (c as usize, r as usize) == goal {
            return Some(k);
        }
        for dr in -1..=1 {
            for dc in -1..=1 {
                if (dc, dr) == (0, 0) || !free(c + dc, r + dr) {
                    continue;
                }
                let diag = dc != 0 && dr != 0;
                if diag && !(free(c + dc, r) && free(c, r + dr)) {
                    continue;
                }
                let nk = if diag { (k.0, k.1 + 1) } else { (k.0 + 1, k.1) };
                let ni = ((r + dr) * w + c + dc) as usize;
                if best[ni].is_none_or(|o| cost(nk) < cost(o)) {
                    best[ni] = Some(nk);
                    heap.push((Reverse(Key(cost(nk))), c + dc, r + dr, nk));
                }
            }
        }
    }
    None
}

/// Enumerates every candidate direction of every free valley and returns
/// the cheapest under weights (5, 2, 2), with `s_max = 16`.
pub fn steering(bits: &[u8], target: f64, heading: f64, prev: f64) -> Option<f64> {
    let n = bits.len();
    let alpha = TAU / n as f64;
    let mut cands: Vec<f64> = Vec::new();
    if bits.iter().all(|&b| b == 0) {
        cands.push(target);
    } else {
        for start in 0..n {
            if bits[start] != 0 || bits[(start + n - 1) % n] == 0 {
                continue;
            }
            let mut width = 0;
            while bits[(start + width) % n] == 0 {
                width += 1;
            }
            let s = start as f64 * alpha;
            if width >= 16 {
                cands.push(wrap_angle(s + 8.0 * alpha));
                cands.push(wrap_angle(s + (width as f64 - 9.0) * alpha));
                let t = (target - s).rem_euclid(TAU);
                if t >= 8.0 * alpha && t <= (width as f64 - 9.0) * alpha {
                    cands.push(target);
                }
            } else {
                cands.push(wrap_angle(s + (width as f64 - 1.0) / 2.0 * alpha));
            }
        }
    }
    let cost = |c: f64| 5.0 * angle_diff(c, target) + 2.0 * angle_diff(c, heading) + 2.0 * angle_diff(c, prev);
    let sector = |c: f64| ((c.rem_euclid(TAU) / alpha).round() as usize) % n;
    cands.into_iter().min_by(|&a, &b| {
        cost(a)
            .total_cmp(&cost(b))
            .then(angle_diff(a, target).total_cmp(&angle_diff(b, target)))
            .then(sector(a).cmp(&sector(b)))
    })
}

/// Union area of half-open rectangles `(x0, x1, y0, y1)` by inclusion–exclusion.
pub fn rect_union_area(rects: &[(usize, usize, usize, usize)]) -> usize {
    let mut total: i64 = 0;
    for subset in 1u32..(1 << rects.len()) {
        let (mut x0, mut x1, mut y0, mut y1) = (0usize, usize::MAX, 0usize, usize::MAX);
        for (i, r) in rects.iter().enumerate() {
            if subset & (1 << i) != 0 {
                x0 = x0.max(r.0);
                x1 = x1.min(r.1);
                y0 = y0.max(r.2);
                y1 = y1.min(r.3);
            }
        }
        let area = (x1.saturating_sub(x0) * y1.saturating_sub(y0)) as i64;
        total += if subset.count_ones() % 2 == 1 { area } else { -area };
    }
    total as usize
}
