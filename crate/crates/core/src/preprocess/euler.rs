use super::PreprocessError;
use crate::dataio::RawKinematicSample;

/// Matrices whose `|RᵀR − I|` exceeds this are rejected.
pub const ORTHONORMAL_HARD_TOL: f64 = 1e-1;
/// `|R₃₁|` above `1 − GIMBAL_EPS` is treated as gimbal lock.
pub const GIMBAL_EPS: f64 = 1e-9;

/// Intrinsic Z-Y-X angles in radians: `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerZyx {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// Decompose a row-major rotation matrix.
///
/// At gimbal lock the roll is fixed to zero and the full in-plane rotation
/// is reported as yaw.
pub fn rotation_to_euler(r: &[[f64; 3]; 3]) -> Result<EulerZyx, PreprocessError> {
    let dev = crate::dataio::orthonormality_error(r);
    if dev.is_nan() || dev > ORTHONORMAL_HARD_TOL {
        return Err(PreprocessError::NotOrthonormal(dev));
    }
    let s = (-r[2][0]).clamp(-1.0, 1.0);
    let pitch = s.asin();
    if r[2][0].abs() > 1.0 - GIMBAL_EPS {
        return Ok(EulerZyx {
            yaw: (-r[0][1]).atan2(r[1][1]),
            pitch,
            roll: 0.0,
        });
    }
    Ok(EulerZyx {
        yaw: r[1][0].atan2(r[0][0]),
        pitch,
        roll: r[2][1].atan2(r[2][2]),
    })
}

/// Compose a row-major rotation matrix from intrinsic Z-Y-X angles.
pub fn euler_to_rotation(e: EulerZyx) -> [[f64; 3]; 3] {
    let (sy, cy) = e.yaw.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (sr, cr) = e.roll.sin_cos();
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

/// Convert both arms of a sample; convenience for feature extraction.
pub(crate) fn sample_euler(s: &RawKinematicSample) -> Result<[EulerZyx; 2], PreprocessError> {
    Ok([
        rotation_to_euler(&s.arms[0].rotation)?,
        rotation_to_euler(&s.arms[1].rotation)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_is_zero() {
        let e = rotation_to_euler(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!((e.yaw, e.pitch, e.roll), (0.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let e = rotation_to_euler(&[[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((e.yaw - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(e.pitch, 0.0);
        assert_eq!(e.roll, 0.0);
    }

    #[test]
    fn gimbal_lock_canonical_form() {
        // pitch = +90°: only yaw − roll is observable; roll is pinned to 0.
        let r = euler_to_rotation(EulerZyx {
            yaw: 0.4,
            pitch: FRAC_PI_2,
            roll: 0.0,
        });
        let e = rotation_to_euler(&r).unwrap();
        assert_eq!(e.roll, 0.0);
        assert!((e.pitch - FRAC_PI_2).abs() < 1e-7);
        assert!((e.yaw - 0.4).abs() < 1e-12);
    }

    #[test]
    fn garbage_rejected() {
        assert!(rotation_to_euler(&[[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(
            rotation_to_euler(&[[f64::NAN, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err()
        );
    }
}
