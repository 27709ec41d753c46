use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use super::{ArmSample, DataError, RawKinematicSample};

/// Orthonormality deviation above which a warning is logged.
pub const ROTATION_WARN_TOL: f64 = 1e-3;
/// Orthonormality deviation above which parsing fails.
pub const ROTATION_FAIL_TOL: f64 = 1e-1;

/// Offsets of one manipulator block inside a kinematics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsmBlock {
    /// 1-based column of the first value of the block.
    pub first_column: usize,
    pub position: usize,
    pub rotation: usize,
    pub linear_velocity: usize,
    pub rotational_velocity: usize,
    pub gripper: usize,
}

impl PsmBlock {
    /// position 3, rotation 9 (row-major), linear velocity 3, rotational velocity 3, gripper 1.
    pub const fn jigsaws(first_column: usize) -> Self {
        Self {
            first_column,
            position: 0,
            rotation: 3,
            linear_velocity: 12,
            rotational_velocity: 15,
            gripper: 18,
        }
    }
}

/// Declarative column layout of a kinematics file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    pub total_columns: usize,
    pub left: PsmBlock,
    pub right: PsmBlock,
}

impl Default for ColumnMap {
    /// JIGSAWS: master-side columns 1–38 ignored, PSM1 (left) 39–57, PSM2 (right) 58–76.
    fn default() -> Self {
        Self {
            total_columns: 76,
            left: PsmBlock::jigsaws(39),
            right: PsmBlock::jigsaws(58),
        }
    }
}

fn arm_from_row(row: &[f64], block: &PsmBlock) -> ArmSample {
    let base = block.first_column - 1;
    let at = |off: usize| row[base + off];
    let mut rotation = [[0.0; 3]; 3];
    for (r, row_vals) in rotation.iter_mut().enumerate() {
        for (c, v) in row_vals.iter_mut().enumerate() {
            *v = at(block.rotation + r * 3 + c);
        }
    }
    ArmSample {
        position: [
            at(block.position),
            at(block.position + 1),
            at(block.position + 2),
        ],
        rotation,
        linear_velocity: [
            at(block.linear_velocity),
            at(block.linear_velocity + 1),
            at(block.linear_velocity + 2),
        ],
        rotational_velocity: [
            at(block.rotational_velocity),
            at(block.rotational_velocity + 1),
            at(block.rotational_velocity + 2),
        ],
        gripper_angle: at(block.gripper),
    }
}

fn arm_into_row(arm: &ArmSample, block: &PsmBlock, row: &mut [f64]) {
    let base = block.first_column - 1;
    for i in 0..3 {
        row[base + block.position + i] = arm.position[i];
        row[base + block.linear_velocity + i] = arm.linear_velocity[i];
        row[base + block.rotational_velocity + i] = arm.rotational_velocity[i];
        for j in 0..3 {
            row[base + block.rotation + i * 3 + j] = arm.rotation[i][j];
        }
    }
    row[base + block.gripper] = arm.gripper_angle;
}

/// Largest entry of `|RᵀR − I|`.
pub fn orthonormality_error(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (dot - target).abs();
            if d.is_nan() || d > worst {
                worst = if d.is_nan() { f64::INFINITY } else { d };
            }
        }
    }
    worst
}

/// Parse kinematics text; `name` is used in error messages.
pub fn parse_kinematics_str(
    text: &str,
    name: &str,
    map: &ColumnMap,
) -> Result<Vec<RawKinematicSample>, DataError> {
    let mut samples = Vec::new();
    let mut noisy_rows = 0usize;
    let mut row = vec![0.0; map.total_columns];
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            if count < map.total_columns {
                row[count] = tok.parse().map_err(|_| DataError::Parse {
                    file: name.to_string(),
                    line: lineno,
                    msg: format!("non-numeric token {tok:?}"),
                })?;
            }
            count += 1;
        }
        if count != map.total_columns {
            return Err(DataError::Parse {
                file: name.to_string(),
                line: lineno,
                msg: format!("expected {} columns, found {count}", map.total_columns),
            });
        }
        let sample = RawKinematicSample {
            arms: [
                arm_from_row(&row, &map.left),
                arm_from_row(&row, &map.right),
            ],
        };
        for arm in &sample.arms {
            let err = orthonormality_error(&arm.rotation);
            if err > ROTATION_FAIL_TOL {
                return Err(DataError::Parse {
                    file: name.to_string(),
                    line: lineno,
                    msg: format!("rotation matrix not orthonormal (deviation {err:.3e})"),
                });
            }
            if err > ROTATION_WARN_TOL {
                noisy_rows += 1;
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(DataError::Empty(name.to_string()));
    }
    if noisy_rows > 0 {
        warn!("{name}: {noisy_rows} rotation matrices deviate from orthonormal by more than {ROTATION_WARN_TOL}");
    }
    Ok(samples)
}

pub fn parse_kinematics(
    path: &Path,
    map: &ColumnMap,
) -> Result<Vec<RawKinematicSample>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_kinematics_str(&text, &path.display().to_string(), map)
}

/// Serialize samples as whitespace-separated rows; master-side columns are written as zeros.
pub fn write_kinematics(samples: &[RawKinematicSample], map: &ColumnMap) -> String {
    let mut out = String::with_capacity(samples.len() * map.total_columns * 14);
    let mut row = vec![0.0; map.total_columns];
    for s in samples {
        row.fill(0.0);
        arm_into_row(&s.arms[0], &map.left, &mut row);
        arm_into_row(&s.arms[1], &map.right, &mut row);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v:.6e}").expect("write to string");
        }
        out.push('\n');
    }
    out
}
