//! Planar serial arm: kinematics and rigid-body dynamics.
//!
//! Links are uniform rods in the vertical x-y plane, joint angles are
//! relative, angle zero points along +x and gravity pulls along -y.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    /// Link lengths (m).
    pub link_lengths: Vec<f64>,
    /// Link masses (kg).
    pub link_masses: Vec<f64>,
    /// Viscous joint damping (N·m·s/rad).
    pub joint_damping: f64,
    /// Gravitational acceleration (m/s²); 0 disables gravity.
    pub gravity: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Symmetric joint torque bound (N·m).
    pub torque_limit: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            link_lengths: vec![0.35, 0.35],
            link_masses: vec![0.5, 0.5],
            joint_damping: 0.1,
            gravity: 9.81,
            dt: 0.01,
            torque_limit: 5.0,
        }
    }
}

impl ArmConfig {
    pub fn n_links(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.is_empty() {
            return Err(Error::InvalidConfig("arm needs at least one link".into()));
        }
        check_len("link masses", self.link_lengths.len(), self.link_masses.len())?;
        if self.link_lengths.iter().chain(&self.link_masses).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig(
                "link lengths and masses must be positive".into(),
            ));
        }
        if !(self.dt > 0.0) || !(self.torque_limit > 0.0) || self.joint_damping < 0.0 {
            return Err(Error::InvalidConfig(
                "dt and torque limit must be positive, damping non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
fn unit(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

#[inline]
fn perp(angle: f64) -> [f64; 2] {
    [-angle.sin(), angle.cos()]
}

fn absolute_angles(q: &[f64]) -> Vec<f64> {
    q.iter()
        .scan(0.0, |acc, &qi| {
            *acc += qi;
            Some(*acc)
        })
        .collect()
}

/// Base, every joint, and the end effector, in order.
pub fn link_points(q: &[f64], lengths: &[f64]) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(q.len() + 1);
    let mut p = [0.0, 0.0];
    pts.push(p);
    for (phi, l) in absolute_angles(q).into_iter().zip(lengths) {
        let u = unit(phi);
        p = [p[0] + l * u[0], p[1] + l * u[1]];
        pts.push(p);
    }
    pts
}

pub fn forward_kinematics(q: &[f64], lengths: &[f64]) -> [f64; 2] {
    *link_points(q, lengths).last().unwrap()
}

/// Two virtual fingertips straddling the end effector, offset by half the
/// aperture on either side perpendicular to the last link.
pub fn fingertips(q: &[f64], lengths: &[f64], aperture: f64) -> [[f64; 2]; 2] {
    let ee = forward_kinematics(q, lengths);
    let phi: f64 = q.iter().sum();
    let n = perp(phi);
    let h = 0.5 * aperture;
    [
        [ee[0] + h * n[0], ee[1] + h * n[1]],
        [ee[0] - h * n[0], ee[1] - h * n[1]],
    ]
}

/// Maps an angle onto `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Elbow-up inverse kinematics for a two-link arm, `None` when unreachable.
pub fn two_link_ik(target: [f64; 2], l1: f64, l2: f64) -> Option<[f64; 2]> {
    let r2 = target[0] * target[0] + target[1] * target[1];
    let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let q2 = -c2.acos();
    let q1 = target[1].atan2(target[0]) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    Some([q1, q2])
}

/// Centre-of-mass velocity Jacobians (one 2×n block per link).
fn com_jacobians(q: &[f64], cfg: &ArmConfig) -> Vec<DMatrix<f64>> {
    let n = q.len();
    let phi = absolute_angles(q);
    let l = &cfg.link_lengths;
    (0..n)
        .map(|k| {
            let mut jac = DMatrix::zeros(2, n);
            for i in 0..=k {
                let mut col = [0.0, 0.0];
                for j in i..k {
                    let e = perp(phi[j]);
                    col[0] += l[j] * e[0];
                    col[1] += l[j] * e[1];
                }
                let e = perp(phi[k]);
                col[0] += 0.5 * l[k] * e[0];
                col[1] += 0.5 * l[k] * e[1];
                jac[(0, i)] = col[0];
                jac[(1, i)] = col[1];
            }
            jac
        })
        .collect()
}

pub fn mass_matrix(q: &[f64], cfg: &ArmConfig) -> DMatrix<f64> {
    let n = q.len();
    let mut m = DMatrix::zeros(n, n);
    for (k, jac) in com_jacobians(q, cfg).iter().enumerate() {
        let mass = cfg.link_masses[k];
        let inertia = mass * cfg.link_lengths[k].powi(2) / 12.0;
        m += mass * jac.transpose() * jac;
        for i in 0..=k {
            for j in 0..=k {
                m[(i, j)] += inertia;
            }
        }
    }
    m
}

/// Generalized forces other than the applied torque: `-(Coriolis/centripetal)
/// + gravity - damping`.
fn passive_forces(q: &[f64], qd: &[f64], cfg: &ArmConfig) -> DVector<f64> {
    let n = q.len();
    let phi = absolute_angles(q);
    let phid = absolute_angles(qd);
    let l = &cfg.link_lengths;
    let mut f = DVector::from_iterator(n, qd.iter().map(|v| -cfg.joint_damping * v));
    for (k, jac) in com_jacobians(q, cfg).iter().enumerate() {
        let mass = cfg.link_masses[k];
        // COM acceleration at zero joint acceleration (centripetal terms)
        let mut acc = [0.0, 0.0];
        for j in 0..k {
            let e = unit(phi[j]);
            acc[0] -= l[j] * phid[j] * phid[j] * e[0];
            acc[1] -= l[j] * phid[j] * phid[j] * e[1];
        }
        let e = unit(phi[k]);
        acc[0] -= 0.5 * l[k] * phid[k] * phid[k] * e[0];
        acc[1] -= 0.5 * l[k] * phid[k] * phid[k] * e[1];
        let force = DVector::from_vec(vec![-mass * acc[0], -mass * (acc[1] + cfg.gravity)]);
        f += jac.transpose() * force;
    }
    f
}

pub fn joint_accelerations(
    q: &[f64],
    qd: &[f64],
    torque: &[f64],
    cfg: &ArmConfig,
) -> Result<Vec<f64>> {
    let n = cfg.n_links();
    check_len("joint positions", n, q.len())?;
    check_len("joint velocities", n, qd.len())?;
    check_len("joint torques", n, torque.len())?;
    let rhs = passive_forces(q, qd, cfg) + DVector::from_column_slice(torque);
    let chol = mass_matrix(q, cfg)
        .cholesky()
        .ok_or_else(|| Error::NonFinite("arm mass matrix factorization".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// One semi-implicit Euler step; torques are clamped to the bound first.
pub fn integrate(
    q: &[f64],
    qd: &[f64],
    torque: &[f64],
    cfg: &ArmConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tau: Vec<f64> = torque
        .iter()
        .map(|t| t.clamp(-cfg.torque_limit, cfg.torque_limit))
        .collect();
    let qdd = joint_accelerations(q, qd, &tau, cfg)?;
    let qd_next: Vec<f64> = qd.iter().zip(&qdd).map(|(v, a)| v + cfg.dt * a).collect();
    let q_next: Vec<f64> = q.iter().zip(&qd_next).map(|(p, v)| p + cfg.dt * v).collect();
    if q_next.iter().chain(&qd_next).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("arm integration".into()));
    }
    Ok((q_next, qd_next))
}

pub fn kinetic_energy(q: &[f64], qd: &[f64], cfg: &ArmConfig) -> f64 {
    let m = mass_matrix(q, cfg);
    let v = DVector::from_column_slice(qd);
    0.5 * (v.transpose() * m * v)[(0, 0)]
}
