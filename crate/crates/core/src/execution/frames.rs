use nalgebra::{DVector, Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

use super::{ExecError, Result};
use crate::trajectory::{Space, Trajectory};

/// Wrist separations or plane normals shorter than this are degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self { position, orientation: UnitQuaternion::identity() }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }
}

/// Fixed rigid transform from the human contact frame to the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTransform {
    transform: Isometry3<f64>,
}

impl CouplingTransform {
    pub fn identity() -> Self {
        Self { transform: Isometry3::identity() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { transform: Isometry3::from_parts(Translation3::from(translation), rotation) }
    }

    /// Builds from a rotation matrix, which must be orthonormal with
    /// determinant one within 1e-9.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if err > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(ExecError::Invalid("rotation is not orthonormal".into()));
        }
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
        Ok(Self::new(q, translation))
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.transform.rotation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.transform.transform_point(&(*p).into()).coords
    }

    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.transform.inverse_transform_point(&(*p).into()).coords
    }
}

/// Position trajectory plus one orientation per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory {
    pub positions: Trajectory,
    pub orientations: Vec<UnitQuaternion<f64>>,
}

impl PoseTrajectory {
    pub fn pose(&self, k: usize) -> Pose {
        let p = &self.positions.points()[k];
        Pose::new(Vector3::new(p[0], p[1], p[2]), self.orientations[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrientationPolicy {
    /// Keep one orientation for the whole path.
    Hold(UnitQuaternion<f64>),
    /// One orientation per reference sample.
    PerSample(Vec<UnitQuaternion<f64>>),
}

fn vec3(p: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Lifts a planar task trajectory into the `z = 0` plane.
pub fn embed_planar(traj: &Trajectory) -> Trajectory {
    traj.map_points(traj.space(), |p| DVector::from_vec(vec![p[0], p[1], 0.0]))
}

fn check_task3(traj: &Trajectory, what: &str) -> Result<()> {
    if traj.space() != Space::Task || traj.dim() != 3 {
        return Err(ExecError::Invalid(format!("{what} must be a 3-D task trajectory")));
    }
    Ok(())
}

/// Applies the fixed human-to-robot transform to every reference sample.
pub fn map_unimanual_reference(
    transform: &CouplingTransform,
    reference: &Trajectory,
    policy: &OrientationPolicy,
) -> Result<PoseTrajectory> {
    check_task3(reference, "human reference")?;
    let orientations = match policy {
        OrientationPolicy::Hold(q) => vec![*q; reference.len()],
        OrientationPolicy::PerSample(qs) => {
            if qs.len() != reference.len() {
                return Err(ExecError::Invalid(format!("{} orientations for {} samples", qs.len(), reference.len())));
            }
            qs.clone()
        }
    };
    let positions = reference.map_points(Space::Task, |p| {
        let r = transform.apply(&vec3(p));
        DVector::from_column_slice(r.as_slice())
    });
    Ok(PoseTrajectory { positions, orientations })
}

fn frame_from_axes(origin: Vector3<f64>, x: Vector3<f64>, y: Vector3<f64>) -> Pose {
    let z = x.cross(&y);
    let m = Matrix3::from_columns(&[x, y, z]);
    Pose::new(origin, UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)))
}

fn wrist_axis(p_l: &Vector3<f64>, p_r: &Vector3<f64>, index: usize) -> Result<Vector3<f64>> {
    let d = p_r - p_l;
    let n = d.norm();
    if n <= DEGENERACY_TOL {
        return Err(ExecError::DegenerateFrame { index, reason: "coincident wrists" });
    }
    Ok(d / n)
}

/// Shared-object frame: origin at the wrist midpoint, Y from the left to
/// the right wrist, X orthogonal to Y inside the plane through the origin
/// and both robot end effectors (signed toward the end effectors), and
/// `Z = X x Y`.
pub fn build_bimanual_frame(p_l: &Vector3<f64>, p_r: &Vector3<f64>, x_l: &Pose, x_r: &Pose) -> Result<Pose> {
    let origin = (p_l + p_r) * 0.5;
    let y = wrist_axis(p_l, p_r, 0)?;
    let normal = (x_l.position - origin).cross(&(x_r.position - origin));
    if normal.norm() <= DEGENERACY_TOL {
        return Err(ExecError::DegenerateFrame { index: 0, reason: "end effectors collinear with the origin" });
    }
    let x = normal.normalize().cross(&y);
    if x.norm() <= DEGENERACY_TOL {
        return Err(ExecError::DegenerateFrame { index: 0, reason: "wrist axis normal to the end-effector plane" });
    }
    let mut x = x.normalize();
    let toward = (x_l.position + x_r.position) * 0.5 - origin;
    if x.dot(&toward) < 0.0 {
        x = -x;
    }
    Ok(frame_from_axes(origin, x, y))
}

/// Object frames along a pair of wrist trajectories. The first frame uses
/// the robot end-effector plane; later frames keep the previous X axis,
/// re-orthogonalised against the current wrist axis.
pub fn bimanual_frames(left: &Trajectory, right: &Trajectory, x_l0: &Pose, x_r0: &Pose) -> Result<Vec<Pose>> {
    check_task3(left, "left reference")?;
    check_task3(right, "right reference")?;
    if left.times() != right.times() {
        return Err(ExecError::Invalid("left and right references must share time stamps".into()));
    }
    let first = build_bimanual_frame(&vec3(left.first()), &vec3(right.first()), x_l0, x_r0)?;
    let mut frames = vec![first];
    for k in 1..left.len() {
        let (pl, pr) = (vec3(&left.points()[k]), vec3(&right.points()[k]));
        let y = wrist_axis(&pl, &pr, k)?;
        let prev_x = frames[k - 1].rotation_matrix().column(0).into_owned();
        let x = prev_x - y * prev_x.dot(&y);
        if x.norm() <= DEGENERACY_TOL {
            return Err(ExecError::DegenerateFrame { index: k, reason: "wrist axis turned onto the previous X axis" });
        }
        frames.push(frame_from_axes((pl + pr) * 0.5, x.normalize(), y));
    }
    Ok(frames)
}

/// Robot references that move rigidly with the object frame:
/// `R = R(W_k) R(W_0)^T`, position `o_k + R v`, orientation `R q_0`, where
/// `v` is each end effector's initial offset from the frame origin.
pub fn map_bimanual_references(
    times: &[f64],
    frames: &[Pose],
    x_l0: &Pose,
    x_r0: &Pose,
) -> Result<(PoseTrajectory, PoseTrajectory)> {
    if frames.is_empty() || frames.len() != times.len() {
        return Err(ExecError::Invalid(format!("{} frames for {} time stamps", frames.len(), times.len())));
    }
    for (k, f) in frames.iter().enumerate() {
        if !f.position.iter().all(|v| v.is_finite()) || !f.orientation.coords.iter().all(|v| v.is_finite()) {
            return Err(ExecError::DegenerateFrame { index: k, reason: "non-finite frame" });
        }
    }
    let w0 = frames[0];
    let v_l = x_l0.position - w0.position;
    let v_r = x_r0.position - w0.position;
    let mut out = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for f in frames {
        let r = f.orientation * w0.orientation.inverse();
        for (side, (v, q0)) in [(v_l, x_l0.orientation), (v_r, x_r0.orientation)].into_iter().enumerate() {
            let p = f.position + r * v;
            out[side].0.push(DVector::from_column_slice(p.as_slice()));
            out[side].1.push(r * q0);
        }
    }
    let [(pl, ql), (pr, qr)] = out;
    Ok((
        PoseTrajectory { positions: Trajectory::new(Space::Task, times.to_vec(), pl)?, orientations: ql },
        PoseTrajectory { positions: Trajectory::new(Space::Task, times.to_vec(), pr)?, orientations: qr },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_transform() {
        let t = CouplingTransform::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(0.1, 0.2, 0.3),
        );
        let p = t.apply(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p, Vector3::new(0.1, 1.2, 0.3), epsilon = 1e-15);
        assert_abs_diff_eq!(t.apply_inverse(&p), Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_matrix() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CouplingTransform::from_matrix(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn collinear_end_effectors_are_degenerate() {
        let l = Pose::from_position(Vector3::new(-1.0, 0.0, 0.0));
        let r = Pose::from_position(Vector3::new(1.0, 0.0, 0.0));
        let err = build_bimanual_frame(&Vector3::new(-0.2, 0.0, 0.0), &Vector3::new(0.2, 0.0, 0.0), &l, &r);
        assert!(matches!(err, Err(ExecError::DegenerateFrame { index: 0, .. })));
    }
}
