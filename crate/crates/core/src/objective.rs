//! Training loss: weighted reconstruction, edge and physics-regularization terms.

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::field::{gradient_l1, Field2D};
use crate::physics::{PhysicsParams, ThetaNodes};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub reg_scale: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.25,
            gamma: 0.05,
            reg_scale: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("reg_scale", self.reg_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("loss weight {name} = {v}")));
            }
        }
        Ok(())
    }
}

/// How the edge term compares gradients of the image and the target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLossMode {
    /// `|gl1(I) - gl1(T)|`.
    #[default]
    MagDiff,
    /// `gl1(I - T)`.
    GradDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub edge: f64,
    pub physics_reg: f64,
}

impl LossBreakdown {
    pub fn compose(recon: f64, edge: f64, physics_reg: f64, w: &LossWeights) -> Self {
        Self {
            total: w.alpha * recon + w.beta * edge + w.gamma * physics_reg,
            recon,
            edge,
            physics_reg,
        }
    }
}

pub fn recon_loss(image: &Field2D, target: &Field2D) -> Result<f64> {
    image.check_same_shape(target, "recon_loss")?;
    let mut acc = 0.0;
    for (a, b) in image.values().iter().zip(target.values()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc / image.len() as f64)
}

pub fn edge_loss(image: &Field2D, target: &Field2D) -> Result<f64> {
    edge_loss_with_mode(image, target, EdgeLossMode::MagDiff)
}

pub fn edge_loss_with_mode(image: &Field2D, target: &Field2D, mode: EdgeLossMode) -> Result<f64> {
    image.check_same_shape(target, "edge_loss")?;
    Ok(match mode {
        EdgeLossMode::MagDiff => (gradient_l1(image) - gradient_l1(target)).abs(),
        EdgeLossMode::GradDiff => gradient_l1(&image.zip_map(target, |a, b| a - b)?),
    })
}

/// `reg_scale * sum |theta_k|` over the five raw parameters.
pub fn physics_reg(params: &PhysicsParams) -> f64 {
    physics_reg_scaled(params, LossWeights::default().reg_scale)
}

pub fn physics_reg_scaled(params: &PhysicsParams, reg_scale: f64) -> f64 {
    reg_scale * params.to_array().iter().map(|t| t.abs()).sum::<f64>()
}

pub fn total_loss(
    image: &Field2D,
    target: &Field2D,
    params: &PhysicsParams,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    total_loss_with_mode(image, target, params, weights, EdgeLossMode::MagDiff)
}

pub fn total_loss_with_mode(
    image: &Field2D,
    target: &Field2D,
    params: &PhysicsParams,
    weights: &LossWeights,
    mode: EdgeLossMode,
) -> Result<LossBreakdown> {
    let recon = recon_loss(image, target)?;
    let edge = edge_loss_with_mode(image, target, mode)?;
    let reg = physics_reg_scaled(params, weights.reg_scale);
    Ok(LossBreakdown::compose(recon, edge, reg, weights))
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub recon: NodeId,
    pub edge: NodeId,
    pub physics_reg: NodeId,
}

impl LossNodes {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item(),
            recon: tape.value(self.recon).item(),
            edge: tape.value(self.edge).item(),
            physics_reg: tape.value(self.physics_reg).item(),
        }
    }
}

/// Records [`total_loss_with_mode`] on a tape; values match the plain
/// evaluation bit for bit.
pub fn total_loss_on_tape(
    tape: &mut Tape,
    image: NodeId,
    target: NodeId,
    theta: ThetaNodes,
    weights: &LossWeights,
    mode: EdgeLossMode,
) -> Result<LossNodes> {
    let recon = tape.mse(image, target)?;
    let edge = match mode {
        EdgeLossMode::MagDiff => {
            let gi = tape.grad_l1(image)?;
            let gt = tape.grad_l1(target)?;
            let d = tape.sub(gi, gt)?;
            tape.abs(d)?
        }
        EdgeLossMode::GradDiff => {
            let d = tape.sub(image, target)?;
            tape.grad_l1(d)?
        }
    };
    let mut sum = tape.abs(theta.0[0])?;
    for &t in &theta.0[1..] {
        let a = tape.abs(t)?;
        sum = tape.add(sum, a)?;
    }
    let reg = tape.affine(sum, weights.reg_scale, 0.0)?;
    let r = tape.affine(recon, weights.alpha, 0.0)?;
    let e = tape.affine(edge, weights.beta, 0.0)?;
    let p = tape.affine(reg, weights.gamma, 0.0)?;
    let re = tape.add(r, e)?;
    let total = tape.add(re, p)?;
    Ok(LossNodes {
        total,
        recon,
        edge,
        physics_reg: reg,
    })
}
