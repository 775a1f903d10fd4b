//! UR-family kinematics: DH forward kinematics, closed-form inverse
//! kinematics with all eight branches, geometric Jacobian and manipulability.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;
use crate::geometry::{compose, Pose, Vec3};

type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    /// mm
    pub a: f64,
    /// mm
    pub d: f64,
    /// rad
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhParams {
    pub rows: [DhRow; 6],
}

impl DhParams {
    /// Manufacturer-published UR5e table.
    pub fn ur5e() -> Self {
        let row = |a, d, alpha| DhRow { a, d, alpha };
        DhParams {
            rows: [
                row(0.0, 162.5, FRAC_PI_2),
                row(-425.0, 0.0, 0.0),
                row(-392.2, 0.0, 0.0),
                row(0.0, 133.3, FRAC_PI_2),
                row(0.0, 99.7, -FRAC_PI_2),
                row(0.0, 99.6, 0.0),
            ],
        }
    }

    pub fn from_slice(rows: &[DhRow]) -> Result<Self, KinematicsError> {
        let rows: [DhRow; 6] = rows.try_into().map_err(|_| KinematicsError::InvalidDh)?;
        if rows.iter().any(|r| !(r.a.is_finite() && r.d.is_finite() && r.alpha.is_finite())) {
            return Err(KinematicsError::InvalidDh);
        }
        Ok(DhParams { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig(pub [f64; 6]);

impl JointConfig {
    /// Elbow-up, tool-down configuration used to seed branch selection.
    pub const HOME: JointConfig = JointConfig([0.0, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, 0.0]);

    /// Largest absolute per-joint difference.
    pub fn max_distance(&self, o: &JointConfig) -> f64 {
        self.0.iter().zip(&o.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits { lower: [-TAU; 6], upper: [TAU; 6] }
    }
}

impl JointLimits {
    pub fn contains(&self, q: &JointConfig) -> bool {
        (0..6).all(|i| q.0[i] >= self.lower[i] - 1e-12 && q.0[i] <= self.upper[i] + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shoulder {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Elbow {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wrist {
    NoFlip,
    Flip,
}

/// Identifies one closed-form IK branch. Orders lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchTag {
    pub shoulder: Shoulder,
    pub elbow: Elbow,
    pub wrist: Wrist,
}

impl fmt::Display for BranchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.shoulder {
            Shoulder::Left => "L",
            Shoulder::Right => "R",
        };
        let e = match self.elbow {
            Elbow::Up => "up",
            Elbow::Down => "down",
        };
        let w = match self.wrist {
            Wrist::NoFlip => "noflip",
            Wrist::Flip => "flip",
        };
        write!(f, "{s}-{e}-{w}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub tag: BranchTag,
    /// Set at a wrist singularity: only `q4 + q6` is determined, and `q6`
    /// was fixed to the seed value.
    pub free_parameter: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IkSolutionSet {
    pub solutions: Vec<IkSolution>,
}

impl IkSolutionSet {
    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }
}

/// Below this |sin q5| the wrist is treated as singular.
const WRIST_EPS: f64 = 1e-9;

fn dh_matrix(row: &DhRow, theta: f64) -> Mat4 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    [
        [ct, -st * ca, st * sa, row.a * ct],
        [st, ct * ca, -ct * sa, row.a * st],
        [0.0, sa, ca, row.d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut r = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

/// Inverse of a rigid homogeneous transform.
fn rigid_inv(m: &Mat4) -> Mat4 {
    let mut r = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = m[j][i];
        }
        r[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
    }
    r[3][3] = 1.0;
    r
}

/// Base-to-frame transforms `T_0i` for i = 1..6 (flange last).
fn frames(q: &JointConfig, dh: &DhParams) -> [Mat4; 6] {
    let mut out = [[[0.0; 4]; 4]; 6];
    let mut acc = dh_matrix(&dh.rows[0], q.0[0]);
    out[0] = acc;
    for i in 1..6 {
        acc = mat_mul(&acc, &dh_matrix(&dh.rows[i], q.0[i]));
        out[i] = acc;
    }
    out
}

/// Flange pose for a joint configuration.
pub fn flange(q: &JointConfig, dh: &DhParams) -> Pose {
    Pose::from_matrix(&frames(q, dh)[5])
}

/// TCP pose: chained DH transforms composed with the tool offset.
pub fn fk(q: &JointConfig, dh: &DhParams, tcp_offset: &Pose) -> Pose {
    compose(&flange(q, dh), tcp_offset)
}

/// All closed-form solutions reaching `target` with the TCP. Returns an
/// empty set when the pose is out of reach.
pub fn ik(target: &Pose, dh: &DhParams, tcp_offset: &Pose) -> IkSolutionSet {
    ik_seeded(target, dh, tcp_offset, 0.0)
}

/// As [`ik`], using `q6_seed` for the free joint at a wrist singularity.
pub fn ik_seeded(target: &Pose, dh: &DhParams, tcp_offset: &Pose, q6_seed: f64) -> IkSolutionSet {
    let t06 = compose(target, &tcp_offset.inverse()).to_matrix();
    let r = &dh.rows;
    let (a2, a3, d4, d6) = (r[1].a, r[2].a, r[3].d, r[5].d);
    let mut set = IkSolutionSet::default();

    // Wrist center.
    let p05 = [t06[0][3] - d6 * t06[0][2], t06[1][3] - d6 * t06[1][2]];
    let rxy = p05[0].hypot(p05[1]);
    if rxy < d4.abs() - 1e-12 {
        return set;
    }
    let psi = p05[1].atan2(p05[0]);
    let phi = (d4 / rxy).clamp(-1.0, 1.0).acos();

    for (shoulder, sign1) in [(Shoulder::Left, 1.0), (Shoulder::Right, -1.0)] {
        let q1 = psi + sign1 * phi + FRAC_PI_2;
        let (s1, c1) = q1.sin_cos();
        let c5 = (t06[0][3] * s1 - t06[1][3] * c1 - d4) / d6;
        if c5.abs() > 1.0 + 1e-12 {
            continue;
        }
        let s5abs = (-t06[0][1] * s1 + t06[1][1] * c1).hypot(t06[0][0] * s1 - t06[1][0] * c1);
        let q5a = s5abs.atan2(c5);
        let singular = q5a.sin().abs() < WRIST_EPS;
        let wrists: &[(Wrist, f64)] =
            if singular { &[(Wrist::NoFlip, 1.0)] } else { &[(Wrist::NoFlip, 1.0), (Wrist::Flip, -1.0)] };
        for &(wrist, sign5) in wrists {
            let q5 = sign5 * q5a;
            let s5 = q5.sin();
            let q6 = if singular {
                q6_seed
            } else {
                let y = (-t06[0][1] * s1 + t06[1][1] * c1) / s5;
                let x = (t06[0][0] * s1 - t06[1][0] * c1) / s5;
                y.atan2(x)
            };
            // Solve the planar 2R chain for q2, q3.
            let t01 = dh_matrix(&r[0], q1);
            let t45 = dh_matrix(&r[4], q5);
            let t56 = dh_matrix(&r[5], q6);
            let t14 = mat_mul(&mat_mul(&rigid_inv(&t01), &t06), &rigid_inv(&mat_mul(&t45, &t56)));
            let p13 = [t14[0][3] - d4 * t14[0][1], t14[1][3] - d4 * t14[1][1]];
            let n2 = p13[0] * p13[0] + p13[1] * p13[1];
            let c3 = (n2 - a2 * a2 - a3 * a3) / (2.0 * a2 * a3);
            if c3.abs() > 1.0 + 1e-12 {
                continue;
            }
            let q3a = c3.clamp(-1.0, 1.0).acos();
            for (elbow, sign3) in [(Elbow::Up, 1.0), (Elbow::Down, -1.0)] {
                let q3 = sign3 * q3a;
                let n = n2.sqrt();
                let q2 = -p13[1].atan2(-p13[0]) + (a3 * q3.sin() / n).clamp(-1.0, 1.0).asin();
                let t13 = mat_mul(&dh_matrix(&r[1], q2), &dh_matrix(&r[2], q3));
                let t34 = mat_mul(&rigid_inv(&t13), &t14);
                let q4 = t34[1][0].atan2(t34[0][0]);
                let q = JointConfig([q1, q2, q3, q4, q5, q6].map(crate::geometry::wrap_angle));
                if q.0.iter().all(|v| v.is_finite()) {
                    set.solutions.push(IkSolution {
                        q,
                        tag: BranchTag { shoulder, elbow, wrist },
                        free_parameter: singular,
                    });
                }
                if q3a.abs() < 1e-12 {
                    // Fully stretched elbow: both signs coincide.
                    break;
                }
            }
        }
        if phi.abs() < 1e-12 {
            break;
        }
    }
    set.solutions.sort_by_key(|s| s.tag);
    set
}

/// Shifts each joint of `q` by whole turns to land nearest `prev` while
/// staying within `limits`.
pub fn unwrap_near(q: &JointConfig, prev: &JointConfig, limits: &JointLimits) -> JointConfig {
    let mut out = *q;
    for i in 0..6 {
        let mut best = q.0[i];
        let mut best_d = f64::INFINITY;
        for k in -2..=2 {
            let v = q.0[i] + k as f64 * TAU;
            if v < limits.lower[i] - 1e-12 || v > limits.upper[i] + 1e-12 {
                continue;
            }
            let d = (v - prev.0[i]).abs();
            if d < best_d {
                best_d = d;
                best = v;
            }
        }
        out.0[i] = best;
    }
    out
}

/// Picks the branch closest to `prev` in max-norm joint distance after
/// unwrapping each candidate toward `prev`. Ties go to the lexicographically
/// first branch tag.
pub fn select_branch(
    sols: &IkSolutionSet,
    prev: &JointConfig,
    limits: &JointLimits,
) -> Result<IkSolution, KinematicsError> {
    let mut sorted: Vec<IkSolution> = sols.solutions.clone();
    sorted.sort_by_key(|s| s.tag);
    let mut best: Option<(f64, IkSolution)> = None;
    for s in sorted {
        let q = unwrap_near(&s.q, prev, limits);
        if !limits.contains(&q) {
            continue;
        }
        let d = q.max_distance(prev);
        if best.as_ref().is_none_or(|(bd, _)| d.partial_cmp(bd) == Some(Ordering::Less)) {
            best = Some((d, IkSolution { q, ..s }));
        }
    }
    best.map(|(_, s)| s).ok_or(KinematicsError::Unreachable)
}

/// Geometric Jacobian at the TCP: rows 0..3 linear (mm/rad), rows 3..6
/// angular (rad/rad).
pub fn jacobian(q: &JointConfig, dh: &DhParams, tcp_offset: &Pose) -> [[f64; 6]; 6] {
    let fr = frames(q, dh);
    let tcp = fk(q, dh, tcp_offset).position;
    let mut j = [[0.0; 6]; 6];
    for i in 0..6 {
        let (z, o) = if i == 0 {
            (Vec3::Z, Vec3::ZERO)
        } else {
            let m = &fr[i - 1];
            (Vec3::new(m[0][2], m[1][2], m[2][2]), Vec3::new(m[0][3], m[1][3], m[2][3]))
        };
        let v = z.cross(tcp - o);
        let col = [v.x, v.y, v.z, z.x, z.y, z.z];
        for r in 0..6 {
            j[r][i] = col[r];
        }
    }
    j
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det6(mut m: [[f64; 6]; 6]) -> f64 {
    let mut det = 1.0;
    for c in 0..6 {
        let p = (c..6).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..6 {
            let f = m[r][c] / m[c][c];
            for k in c..6 {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    det
}

fn has_ur_structure(dh: &DhParams) -> bool {
    let r = &dh.rows;
    let alphas = [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2, -FRAC_PI_2, 0.0];
    r.iter().zip(alphas).all(|(row, a)| (row.alpha - a).abs() < 1e-12)
        && [r[0].a, r[3].a, r[4].a, r[5].a, r[1].d, r[2].d].iter().all(|v| *v == 0.0)
}

/// Yoshikawa manipulability `sqrt(det(J Jᵀ))`, which equals `|det J|` for
/// the square Jacobian.
///
/// For UR-structured tables the determinant has the closed form
/// `a2 a3 s3 s5 (a2 c2 + a3 c23 + d5 s234)`, which is exactly zero at the
/// wrist and elbow singularities; other tables use elimination.
pub fn manipulability(q: &JointConfig, dh: &DhParams, tcp_offset: &Pose) -> f64 {
    if has_ur_structure(dh) {
        let r = &dh.rows;
        let [_, q2, q3, q4, q5, _] = q.0;
        let (a2, a3, d5) = (r[1].a, r[2].a, r[4].d);
        (a2 * a3 * q3.sin() * q5.sin() * (a2 * q2.cos() + a3 * (q2 + q3).cos() + d5 * (q2 + q3 + q4).sin())).abs()
    } else {
        manipulability_lu(q, dh, tcp_offset)
    }
}

/// `|det J|` by elimination, valid for any DH table.
pub fn manipulability_lu(q: &JointConfig, dh: &DhParams, tcp_offset: &Pose) -> f64 {
    det6(jacobian(q, dh, tcp_offset)).abs()
}

pub fn is_singular(q: &JointConfig, dh: &DhParams, tcp_offset: &Pose, eps: f64) -> bool {
    manipulability(q, dh, tcp_offset) < eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tcp() -> Pose {
        Pose::from_translation(Vec3::new(0.0, 0.0, 150.0))
    }

    fn random_q(rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig(std::array::from_fn(|_| rng.gen_range(-PI..PI)))
    }

    #[test]
    fn zero_configuration_matches_hand_chain() {
        // Multiplying the six DH matrices by hand at q = 0 with the UR5e table:
        // flange at (a2 + a3, -(d4 + d6), d1 - d5), flange z along -y,
        // flange y along +z.
        let p = fk(&JointConfig::default(), &DhParams::ur5e(), &Pose::IDENTITY);
        assert!(p.position.distance(Vec3::new(-817.2, -232.9, 62.8)) < 1e-9);
        let m = p.orientation.to_matrix();
        let expect = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - expect[i][j]).abs() < 1e-12, "{m:?}");
            }
        }
        let t = fk(&JointConfig::default(), &DhParams::ur5e(), &tcp());
        assert!(t.position.distance(Vec3::new(-817.2, -382.9, 62.8)) < 1e-9);
    }

    #[test]
    fn fk_is_periodic_and_bounded() {
        let dh = DhParams::ur5e();
        let bound: f64 = dh.rows.iter().map(|r| r.a.abs() + r.d.abs()).sum::<f64>() + 150.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let p = fk(&q, &dh, &tcp());
            assert!(p.position.norm() <= bound);
            for i in 0..6 {
                let mut q2 = q;
                q2.0[i] += TAU;
                let p2 = fk(&q2, &dh, &tcp());
                assert!(p.position.distance(p2.position) < 1e-9);
                assert!(p.orientation.angle_to(&p2.orientation) < 1e-9);
            }
        }
    }

    #[test]
    fn ik_recovers_the_generating_branch() {
        let dh = DhParams::ur5e();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let q = random_q(&mut rng);
            if q.0[4].sin().abs() < 1e-3 {
                continue;
            }
            let target = fk(&q, &dh, &tcp());
            let set = ik(&target, &dh, &tcp());
            assert!(set.len() >= 2);
            let found = set
                .solutions
                .iter()
                .any(|s| s.q.0.iter().zip(&q.0).all(|(a, b)| crate::geometry::wrap_angle(a - b).abs() < 1e-8));
            assert!(found, "q={q:?} set={set:?}");
            for s in &set.solutions {
                let p = fk(&s.q, &dh, &tcp());
                assert!(p.position.distance(target.position) < 1e-6);
                assert!(p.orientation.angle_to(&target.orientation) < 1e-8);
            }
        }
    }

    #[test]
    fn far_target_is_unreachable() {
        // The TCP can be at most |(a2 + a3, d4)| + |(d5, d6 + tcp)| from the
        // shoulder joint; a table-height point 1200 mm out is farther.
        let dh = DhParams::ur5e();
        let reach = (817.2f64).hypot(133.3) + (99.7f64).hypot(99.6 + 150.0);
        let target = Pose::new(Vec3::new(1200.0, 0.0, 0.0), Rotation::about_x(PI));
        assert!(target.position.distance(Vec3::new(0.0, 0.0, 162.5)) > reach);
        assert!(ik(&target, &dh, &tcp()).is_empty());
    }

    #[test]
    fn elbow_branches_match_brute_force_root_count() {
        let dh = DhParams::ur5e();
        let target = Pose::new(Vec3::new(400.0, 100.0, 0.0), Rotation::about_x(PI));
        let set = ik(&target, &dh, &tcp());
        let left_noflip: Vec<_> =
            set.solutions.iter().filter(|s| s.tag.shoulder == Shoulder::Left && s.tag.wrist == Wrist::NoFlip).collect();
        assert_eq!(left_noflip.len(), 2);
        assert_ne!(left_noflip[0].tag.elbow, left_noflip[1].tag.elbow);
        // Oracle: the 2R subchain distance equation has exactly as many roots in q3.
        let s = left_noflip[0];
        let fr = frames(&s.q, &dh);
        let shoulder = Vec3::new(fr[0][0][3], fr[0][1][3], fr[0][2][3]);
        let wrist_in = Vec3::new(fr[2][0][3], fr[2][1][3], fr[2][2][3]);
        let target_d = shoulder.distance(wrist_in);
        let (a2, a3) = (425.0f64, 392.2f64);
        let f = |q3: f64| (a2 * a2 + a3 * a3 + 2.0 * a2 * a3 * q3.cos()).sqrt() - target_d;
        let n = 200_000;
        let roots = (0..n)
            .filter(|&i| {
                let a = -PI + TAU * i as f64 / n as f64;
                let b = -PI + TAU * (i + 1) as f64 / n as f64;
                f(a).signum() != f(b).signum()
            })
            .count();
        assert_eq!(roots, 2);
    }

    #[test]
    fn select_branch_rules() {
        let limits = JointLimits::default();
        let mk = |v: f64, elbow| IkSolution {
            q: JointConfig([v, 0.0, 0.0, 0.0, 0.0, 0.0]),
            tag: BranchTag { shoulder: Shoulder::Left, elbow, wrist: Wrist::NoFlip },
            free_parameter: false,
        };
        let prev = JointConfig([0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let set = IkSolutionSet { solutions: vec![mk(1.5, Elbow::Up), mk(0.5, Elbow::Down)] };
        assert_eq!(select_branch(&set, &prev, &limits).unwrap().q, prev);
        let set = IkSolutionSet { solutions: vec![mk(0.6, Elbow::Down), mk(1.5, Elbow::Up)] };
        assert_eq!(select_branch(&set, &prev, &limits).unwrap().tag.elbow, Elbow::Down);
        let set = IkSolutionSet { solutions: vec![mk(0.75, Elbow::Down), mk(0.25, Elbow::Up)] };
        assert_eq!(select_branch(&set, &prev, &limits).unwrap().tag.elbow, Elbow::Up);
        assert_eq!(select_branch(&IkSolutionSet::default(), &prev, &limits), Err(KinematicsError::Unreachable));
    }

    #[test]
    fn select_branch_unwraps_whole_turns() {
        let limits = JointLimits::default();
        let prev = JointConfig([0.0, 0.0, 0.0, 0.0, 0.0, 3.1]);
        let s = IkSolution {
            q: JointConfig([0.0, 0.0, 0.0, 0.0, 0.0, -3.1]),
            tag: BranchTag { shoulder: Shoulder::Left, elbow: Elbow::Up, wrist: Wrist::NoFlip },
            free_parameter: false,
        };
        let got = select_branch(&IkSolutionSet { solutions: vec![s] }, &prev, &limits).unwrap();
        assert!((got.q.0[5] - (TAU - 3.1)).abs() < 1e-12);
    }

    #[test]
    fn wrist_singularity() {
        let dh = DhParams::ur5e();
        let q = JointConfig([0.3, -1.2, 1.1, -0.4, 0.0, 0.7]);
        assert!(manipulability(&q, &dh, &tcp()) < 1e-9);
        assert!(is_singular(&q, &dh, &tcp(), 1e-9));
        let set = ik_seeded(&fk(&q, &dh, &tcp()), &dh, &tcp(), 0.7);
        assert!(!set.is_empty());
        let hit =
            set.solutions.iter().find(|s| (s.q.0[0] - 0.3).abs() < 1e-8 && (s.q.0[2] - 1.1).abs() < 1e-8).unwrap();
        assert!(hit.free_parameter);
        assert_eq!(set.solutions.iter().filter(|s| s.tag.shoulder == hit.tag.shoulder && s.free_parameter).count(), 2);
        let sum = crate::geometry::wrap_angle(hit.q.0[3] + hit.q.0[5] - (-0.4 + 0.7));
        assert!(sum.abs() < 1e-8);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let dh = DhParams::ur5e();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let q = random_q(&mut rng);
            let j = jacobian(&q, &dh, &tcp());
            for i in 0..6 {
                let (mut qp, mut qm) = (q, q);
                qp.0[i] += h;
                qm.0[i] -= h;
                let (pp, pm) = (fk(&qp, &dh, &tcp()), fk(&qm, &dh, &tcp()));
                let dv = (pp.position - pm.position) * (1.0 / (2.0 * h));
                // angular velocity from the relative rotation
                let rel = pp.orientation.compose(&pm.orientation.inverse());
                let [w, x, y, z] = rel.quaternion();
                let ang = 2.0 * Vec3::new(x, y, z).norm().atan2(w);
                let axis = Vec3::new(x, y, z).normalized().unwrap_or(Vec3::ZERO);
                let dw = axis * (ang / (2.0 * h));
                let fd = [dv.x, dv.y, dv.z, dw.x, dw.y, dw.z];
                for r in 0..6 {
                    assert!((j[r][i] - fd[r]).abs() < 1e-5, "row {r} col {i}: {} vs {}", j[r][i], fd[r]);
                }
            }
        }
    }

    #[test]
    fn closed_form_determinant_matches_elimination() {
        let dh = DhParams::ur5e();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let a = manipulability(&q, &dh, &tcp());
            let b = manipulability_lu(&q, &dh, &tcp());
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn manipulability_ignores_base_rotation() {
        let dh = DhParams::ur5e();
        let q = JointConfig([0.2, -1.0, 1.3, -0.9, 1.1, 0.4]);
        let m = manipulability(&q, &dh, &tcp());
        for off in [0.5, -2.0, 3.0] {
            let mut q2 = q;
            q2.0[0] += off;
            assert!((manipulability(&q2, &dh, &tcp()) - m).abs() <= 1e-9 * m.max(1.0));
        }
    }
}
