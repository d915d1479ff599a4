use devnav_core::geometry::Pose;
use devnav_core::metrics::{ate_poses, rpe_poses, summarize, RpeForm};
use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn homogeneous(p: &Pose) -> Matrix4<f64> {
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
    // atan2 form stays well conditioned near 0 and π
    skew.norm().atan2(tr - 1.0).to_degrees()
}

fn oracle_rpe(gt: &[Pose], est: &[Pose], delta: usize) -> Vec<(f64, f64)> {
    (0..gt.len() - delta)
        .map(|i| {
            let q = inv(&homogeneous(&gt[i])) * homogeneous(&gt[i + delta]);
            let p = inv(&homogeneous(&est[i])) * homogeneous(&est[i + delta]);
            let e = inv(&q) * p;
            (trans_norm(&e), angle_deg(&e))
        })
        .collect()
}

/// Horn's closed form: the rotation is the dominant eigenvector of a 4×4
/// symmetric matrix built from the cross-covariance.
fn horn_align(reference: &[Vector3<f64>], source: &[Vector3<f64>]) -> Matrix4<f64> {
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
    let nmat = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let k = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(k);
    let rot = Pose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::zeros()).unwrap();
    let r = homogeneous(&rot).fixed_view::<3, 3>(0, 0).into_owned();
    let t = mr - r * ms;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

fn oracle_ate(gt: &[Pose], est: &[Pose]) -> Vec<f64> {
    let r: Vec<_> = gt.iter().map(|p| *p.translation()).collect();
    let s: Vec<_> = est.iter().map(|p| *p.translation()).collect();
    let sm = horn_align(&r, &s);
    gt.iter()
        .zip(est)
        .map(|(q, p)| trans_norm(&(inv(&homogeneous(q)) * sm * homogeneous(p))))
        .collect()
}

fn random_pose(rng: &mut impl Rng, spread: f64) -> Pose {
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

fn random_pair(seed: u64) -> (Vec<Pose>, Vec<Pose>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=50);
    let gt: Vec<Pose> = (0..n).map(|_| random_pose(&mut rng, 5.0)).collect();
    let est: Vec<Pose> = gt.iter().map(|p| *p * random_pose(&mut rng, 0.3)).collect();
    (gt, est)
}

#[test]
fn rpe_and_ate_match_matrix_oracle() {
    for seed in 0..100 {
        let (gt, est) = random_pair(seed);
        for delta in [1, 2, 5] {
            let report = rpe_poses(&gt, &est, delta, RpeForm::Canonical).unwrap();
            let oracle = oracle_rpe(&gt, &est, delta);
            assert_eq!(report.per_frame.len(), oracle.len());
            for (s, (t, r)) in report.per_frame.iter().zip(&oracle) {
                assert!((s.translation - t).abs() < 1e-9, "seed {seed}");
                assert!((s.rotation - r).abs() < 1e-9, "seed {seed}: {} vs {r}", s.rotation);
            }
        }
        let report = ate_poses(&gt, &est).unwrap();
        for (s, o) in report.per_frame.iter().zip(oracle_ate(&gt, &est)) {
            assert!((s - o).abs() < 1e-9, "seed {seed}");
        }
        assert!((report.translational.rmse - report.alignment.residual_rmse).abs() < 1e-12);
    }
}

#[test]
fn ate_noise_monte_carlo() {
    let sigma = 0.01;
    let axis = Normal::new(0.0, sigma / 3f64.sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let gt: Vec<Pose> = (0..500).map(|_| random_pose(&mut rng, 4.0)).collect();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est: Vec<Pose> = gt
            .iter()
            .map(|p| {
                let noise = Vector3::new(axis.sample(&mut rng), axis.sample(&mut rng), axis.sample(&mut rng));
                Pose::new(*p.rotation(), p.translation() + noise)
            })
            .collect();
        let rmse = ate_poses(&gt, &est).unwrap().translational.rmse;
        assert!((0.008..=0.012).contains(&rmse), "seed {seed}: {rmse}");
    }
}

proptest! {
    #[test]
    fn summary_rmse_squared_is_mean_square(samples in prop::collection::vec(0.0f64..100.0, 1..200)) {
        let s = summarize(&samples).unwrap();
        let ms = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
        prop_assert!((s.rmse * s.rmse - ms).abs() <= 1e-12 * ms.max(1.0));
        prop_assert!(s.mean >= 0.0 && s.median >= 0.0);
        prop_assert!(samples.contains(&s.median));
    }

    #[test]
    fn metric_invariances(seed in 0u64..10_000) {
        let (gt, est) = random_pair(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let g = random_pose(&mut rng, 10.0);

        let base = ate_poses(&gt, &est).unwrap().translational;
        let moved: Vec<Pose> = est.iter().map(|p| g * *p).collect();
        let other = ate_poses(&gt, &moved).unwrap().translational;
        prop_assert!((base.rmse - other.rmse).abs() < 1e-9);
        prop_assert!((base.mean - other.mean).abs() < 1e-9);
        prop_assert!((base.median - other.median).abs() < 1e-9);

        let r0 = rpe_poses(&gt, &est, 1, RpeForm::Canonical).unwrap();
        let gt2: Vec<Pose> = gt.iter().map(|p| g * *p).collect();
        let r1 = rpe_poses(&gt2, &moved, 1, RpeForm::Canonical).unwrap();
        for (a, b) in r0.per_frame.iter().zip(&r1.per_frame) {
            prop_assert!((a.translation - b.translation).abs() < 1e-9);
            prop_assert!((a.rotation - b.rotation).abs() < 1e-9);
        }
    }
}
