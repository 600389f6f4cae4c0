use super::{Pose, Skeleton, Vec3};
use crate::error::{Error, Result};

pub(crate) type Mat3 = [[f64; 3]; 3];

pub(crate) fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat3_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// World positions of every joint. The root sits at `pose.root_position`.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<Vec3>> {
    if pose.joint_rotations.len() != skeleton.num_joints() {
        return Err(Error::Structural(format!(
            "pose has {} rotations, skeleton has {} joints",
            pose.joint_rotations.len(),
            skeleton.num_joints()
        )));
    }
    if !pose.is_finite() {
        return Err(Error::Validation("non-finite pose".into()));
    }
    Ok(forward_kinematics_unchecked(skeleton, pose))
}

/// [`forward_kinematics`] without validation; rotations are normalized.
pub fn forward_kinematics_unchecked(skeleton: &Skeleton, pose: &Pose) -> Vec<Vec3> {
    let n = skeleton.num_joints();
    let mut global: Vec<Mat3> = Vec::with_capacity(n);
    let mut pos: Vec<Vec3> = Vec::with_capacity(n);
    for i in 0..n {
        let local = pose.joint_rotations[i].to_matrix();
        match skeleton.parents[i] {
            None => {
                global.push(local);
                pos.push(pose.root_position);
            }
            Some(p) => {
                let off = mat3_vec(&global[p], &skeleton.offsets[i]);
                let pp = pos[p];
                pos.push([pp[0] + off[0], pp[1] + off[1], pp[2] + off[2]]);
                global.push(mat3_mul(&global[p], &local));
            }
        }
    }
    pos
}

/// Mean per-joint position error between two equal-length clips, with each
/// frame's root moved to `(0, height, 0)` so drift in the ground plane is
/// not counted.
pub fn mpjpe(skeleton: &Skeleton, a: &[Pose], b: &[Pose]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Structural(format!(
            "mpjpe needs equal non-empty sequences, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let centered = |p: &Pose| {
        let mut p = p.clone();
        p.root_position = [0.0, p.root_position[1], 0.0];
        forward_kinematics(skeleton, &p)
    };
    let mut total = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        let (xa, xb) = (centered(pa)?, centered(pb)?);
        for (u, v) in xa.iter().zip(&xb) {
            total += ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
        }
    }
    Ok(total / (a.len() * skeleton.num_joints()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Quat;

    fn chain() -> Skeleton {
        Skeleton::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![None, Some(0), Some(1)],
            vec![[1.0, 0.0, 0.0]; 3],
        )
        .unwrap()
    }

    #[test]
    fn identity_chain() {
        let sk = chain();
        let p = Pose::rest(&sk, [0.0; 3]);
        let pos = forward_kinematics(&sk, &p).unwrap();
        assert_eq!(pos, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    }

    #[test]
    fn root_rotation_about_z() {
        let sk = chain();
        let mut p = Pose::rest(&sk, [0.0; 3]);
        p.joint_rotations[0] = Quat::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let pos = forward_kinematics(&sk, &p).unwrap();
        let expect = [0.0, 1.0, 0.0];
        for k in 0..3 {
            assert!((pos[1][k] - expect[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatch_is_structural() {
        let sk = chain();
        let mut p = Pose::rest(&sk, [0.0; 3]);
        p.joint_rotations.pop();
        assert!(matches!(forward_kinematics(&sk, &p), Err(Error::Structural(_))));
        let mut p = Pose::rest(&sk, [0.0; 3]);
        p.root_position[1] = f64::NAN;
        assert!(matches!(forward_kinematics(&sk, &p), Err(Error::Validation(_))));
    }
}
