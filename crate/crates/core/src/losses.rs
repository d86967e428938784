//! Point-level auxiliary supervision targets and loss functions.
//!
//! Two auxiliary signals are generated per point: a binary foreground label
//! (inside any ground-truth box) and the offset from the point to its owning
//! box center. The losses here — focal foreground segmentation, smooth-L1
//! center estimation, focal classification, smooth-L1 box regression, and
//! softmax cross-entropy orientation — all return the scalar value together
//! with the analytic gradient with respect to their predictions, verified
//! elsewhere against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_box, Box3D};
use crate::pointcloud::PointCloud;

/// Probabilities are clamped into [CLAMP, 1 - CLAMP] before any log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Per-point auxiliary supervision targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxTargets {
    /// Foreground label: point falls inside some ground-truth box.
    pub s: Vec<bool>,
    /// Offset from point to owning box center; zero for background.
    pub dp: Vec<[f64; 3]>,
    /// Index of the owning box (first containing box in list order).
    pub owner: Vec<Option<u32>>,
}

impl AuxTargets {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn foreground_count(&self) -> usize {
        self.s.iter().filter(|&&s| s).count()
    }
}

/// Weights of the joint objective plus the loss hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Box regression weight.
    pub omega: f64,
    /// Orientation classification weight.
    pub beta: f64,
    /// Foreground segmentation weight.
    pub mu: f64,
    /// Center estimation weight.
    pub lambda: f64,
    /// Focal balancing factor.
    pub alpha: f64,
    /// Focal focusing exponent.
    pub gamma: f64,
    /// Smooth-L1 breakpoint.
    pub smooth_l1_delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            omega: 1.0,
            beta: 0.2,
            mu: 2.0,
            lambda: 4.0,
            alpha: 0.25,
            gamma: 2.0,
            smooth_l1_delta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega,
            self.beta,
            self.mu,
            self.lambda,
            self.alpha,
            self.gamma,
            self.smooth_l1_delta,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Labels each point with its first containing box, in annotation order.
pub fn make_aux_targets(pc: &PointCloud, boxes: &[Box3D]) -> AuxTargets {
    let n = pc.len();
    let mut s = vec![false; n];
    let mut dp = vec![[0.0; 3]; n];
    let mut owner = vec![None; n];
    for i in 0..n {
        let p = pc.point(i);
        for (bi, b) in boxes.iter().enumerate() {
            if point_in_box(p, b) {
                s[i] = true;
                dp[i] = [b.cx - p.x, b.cy - p.y, b.cz - p.z];
                owner[i] = Some(bi as u32);
                break;
            }
        }
    }
    AuxTargets { s, dp, owner }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Focal term on an already-oriented probability: value and d/dp.
fn focal_term(p_hat: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let one_m = 1.0 - p_hat;
    let value = -alpha * one_m.powf(gamma) * p_hat.ln();
    let mut grad = -alpha * one_m.powf(gamma) / p_hat;
    if gamma > 0.0 {
        grad += alpha * gamma * one_m.powf(gamma - 1.0) * p_hat.ln();
    }
    (value, grad)
}

/// Focal foreground/background segmentation loss over all points,
/// normalized by the foreground count clamped to at least 1.
///
/// Returns the loss and the gradient with respect to each predicted
/// foreground probability.
pub fn seg_loss(
    s_tilde: &[f64],
    s: &[bool],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if s_tilde.len() != s.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} labels",
            s_tilde.len(),
            s.len()
        )));
    }
    let n_pos = s.iter().filter(|&&v| v).count().max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![0.0; s_tilde.len()];
    for i in 0..s_tilde.len() {
        let st = clamp_prob(s_tilde[i]);
        let (p_hat, sign) = if s[i] { (st, 1.0) } else { (1.0 - st, -1.0) };
        let (value, dterm) = focal_term(p_hat, alpha, gamma);
        total += value;
        grads[i] = sign * dterm / n_pos;
    }
    Ok((total / n_pos, grads))
}

/// Smooth-L1 of a scalar residual: quadratic inside the breakpoint, linear
/// outside, with a continuous derivative.
pub fn smooth_l1(d: f64, delta: f64) -> (f64, f64) {
    if d.abs() < delta {
        (0.5 * d * d / delta, d / delta)
    } else {
        (d.abs() - 0.5 * delta, d.signum())
    }
}

/// Center-estimation loss: smooth-L1 on the offset residuals of foreground
/// points, normalized by the foreground count; background points contribute
/// nothing and receive zero gradient.
pub fn ctr_loss(
    dp_pred: &[[f64; 3]],
    targets: &AuxTargets,
    delta: f64,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if dp_pred.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} targets",
            dp_pred.len(),
            targets.len()
        )));
    }
    let n_pos = targets.foreground_count();
    let mut grads = vec![[0.0; 3]; dp_pred.len()];
    if n_pos == 0 {
        return Ok((0.0, grads));
    }
    let norm = n_pos as f64;
    let mut total = 0.0;
    for i in 0..dp_pred.len() {
        if !targets.s[i] {
            continue;
        }
        for a in 0..3 {
            let (value, deriv) = smooth_l1(dp_pred[i][a] - targets.dp[i][a], delta);
            total += value;
            grads[i][a] = deriv / norm;
        }
    }
    Ok((total / norm, grads))
}

/// Focal classification loss over anchors.
///
/// `probs` is row-major `n_anchors x n_classes`; `labels[a]` is the assigned
/// class of anchor `a`, or `None` for a negative anchor. Every (anchor,
/// class) slot contributes one binary focal term — the probability itself
/// where the slot is the assigned class, its complement everywhere else —
/// and the sum is normalized by the positive-anchor count clamped to 1.
pub fn cls_focal_loss(
    probs: &[f64],
    n_classes: usize,
    labels: &[Option<usize>],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if n_classes == 0 || probs.len() != labels.len() * n_classes {
        return Err(Error::invalid(format!(
            "probability buffer holds {} values, expected {} x {}",
            probs.len(),
            labels.len(),
            n_classes
        )));
    }
    if let Some(bad) = labels.iter().flatten().find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("label {bad} out of {n_classes} classes")));
    }
    let n_pos = labels.iter().filter(|l| l.is_some()).count().max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![0.0; probs.len()];
    for (a, label) in labels.iter().enumerate() {
        for c in 0..n_classes {
            let idx = a * n_classes + c;
            let p = clamp_prob(probs[idx]);
            let (p_hat, sign) = if *label == Some(c) { (p, 1.0) } else { (1.0 - p, -1.0) };
            let (value, dterm) = focal_term(p_hat, alpha, gamma);
            total += value;
            grads[idx] = sign * dterm / n_pos;
        }
    }
    Ok((total / n_pos, grads))
}

/// Smooth-L1 box regression over the 8 targets
/// `(x, y, z, l, w, h, vx, vy)`, averaged over the given (positive) rows.
/// Velocity components enter unnormalized, like the rest.
pub fn box_reg_loss(
    pred: &[[f64; 8]],
    target: &[[f64; 8]],
    delta: f64,
) -> Result<(f64, Vec<[f64; 8]>)> {
    if pred.len() != target.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let norm = pred.len().max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![[0.0; 8]; pred.len()];
    for i in 0..pred.len() {
        for k in 0..8 {
            let (value, deriv) = smooth_l1(pred[i][k] - target[i][k], delta);
            total += value;
            grads[i][k] = deriv / norm;
        }
    }
    Ok((total / norm, grads))
}

/// Softmax cross-entropy over two orientation bins, averaged over rows.
pub fn orient_ce_loss(logits: &[[f64; 2]], labels: &[usize]) -> Result<(f64, Vec<[f64; 2]>)> {
    if logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= 2) {
        return Err(Error::invalid(format!("orientation label {bad} out of 2 bins")));
    }
    let norm = logits.len().max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![[0.0; 2]; logits.len()];
    for i in 0..logits.len() {
        let [l0, l1] = logits[i];
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        total += lse - logits[i][labels[i]];
        let p = [(l0 - lse).exp(), (l1 - lse).exp()];
        for k in 0..2 {
            let onehot = if labels[i] == k { 1.0 } else { 0.0 };
            grads[i][k] = (p[k] - onehot) / norm;
        }
    }
    Ok((total / norm, grads))
}

/// The five loss components entering the joint objective.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub cls: f64,
    pub box_reg: f64,
    pub orient: f64,
    pub seg: f64,
    pub ctr: f64,
}

/// Weighted sum: `cls + omega*box + beta*orient + mu*seg + lambda*ctr`.
pub fn joint_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.cls + w.omega * parts.box_reg + w.beta * parts.orient + w.mu * parts.seg + w.lambda * parts.ctr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DetClass;
    use approx::assert_relative_eq;

    fn cloud(points: &[(f32, f32, f32)]) -> PointCloud {
        let mut pc = PointCloud::default();
        for &(x, y, z) in points {
            pc.push(x, y, z, 0.0, 0.0);
        }
        pc
    }

    #[test]
    fn targets_no_boxes() {
        let pc = cloud(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]);
        let t = make_aux_targets(&pc, &[]);
        assert!(t.s.iter().all(|&s| !s));
        assert!(t.dp.iter().all(|dp| *dp == [0.0; 3]));
        assert_eq!(t.foreground_count(), 0);
    }

    #[test]
    fn targets_offsets() {
        let b = Box3D::gt(0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.0, DetClass::Car);
        let pc = cloud(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (9.0, 9.0, 9.0)]);
        let t = make_aux_targets(&pc, &[b]);
        assert_eq!(t.s, vec![true, true, false]);
        assert_eq!(t.dp[0], [0.0; 3]);
        assert_eq!(t.dp[1], [-1.0, 0.0, 0.0]);
        assert_eq!(t.owner, vec![Some(0), Some(0), None]);
    }

    #[test]
    fn targets_first_box_wins_on_overlap() {
        let a = Box3D::gt(0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.0, DetClass::Car);
        let b = Box3D::gt(1.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.0, DetClass::Truck);
        let pc = cloud(&[(0.5, 0.0, 0.0)]);
        let t = make_aux_targets(&pc, &[a, b]);
        assert_eq!(t.owner[0], Some(0));
        assert_eq!(t.dp[0], [-0.5, 0.0, 0.0]);
    }

    #[test]
    fn seg_loss_hand_value() {
        // one foreground point at probability 0.5: 0.25 * 0.25 * ln 2
        let (loss, _) = seg_loss(&[0.5], &[true], 0.25, 2.0).unwrap();
        assert_relative_eq!(loss, 0.25 * 0.25 * 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(loss, 0.043322, epsilon = 1e-6);
    }

    #[test]
    fn seg_loss_perfect_prediction_near_zero() {
        let (loss, _) = seg_loss(&[1.0 - 1e-7], &[true], 0.25, 2.0).unwrap();
        assert!(loss < 1e-13, "{loss}");
    }

    #[test]
    fn seg_loss_no_foreground_is_finite() {
        let (loss, _) = seg_loss(&[0.3, 0.7], &[false, false], 0.25, 2.0).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 0.0);
    }

    #[test]
    fn seg_loss_length_mismatch() {
        assert!(seg_loss(&[0.5], &[true, false], 0.25, 2.0).is_err());
    }

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(0.0, 1.0).0, 0.0);
        assert_relative_eq!(smooth_l1(0.5, 1.0).0, 0.125);
        assert_relative_eq!(smooth_l1(2.0, 1.0).0, 1.5);
        assert_relative_eq!(smooth_l1(-2.0, 1.0).0, 1.5);
        // derivative continuous at the breakpoint
        assert_relative_eq!(smooth_l1(1.0 - 1e-9, 1.0).1, 1.0, epsilon = 1e-8);
        assert_relative_eq!(smooth_l1(1.0, 1.0).1, 1.0);
    }

    #[test]
    fn ctr_loss_masks_background() {
        let b = Box3D::gt(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0, DetClass::Car);
        let pc = cloud(&[(0.5, 0.0, 0.0), (9.0, 9.0, 9.0)]);
        let t = make_aux_targets(&pc, &[b]);
        let exact = t.dp.clone();
        let (zero_loss, _) = ctr_loss(&exact, &t, 1.0).unwrap();
        assert_eq!(zero_loss, 0.0);

        let mut pred = exact.clone();
        pred[0][0] += 0.5;
        let (loss, grads) = ctr_loss(&pred, &t, 1.0).unwrap();
        assert_relative_eq!(loss, 0.125, epsilon = 1e-12);
        assert_eq!(grads[1], [0.0; 3]);

        // perturbing the background prediction changes nothing
        pred[1] = [100.0, -3.0, 7.0];
        let (loss2, _) = ctr_loss(&pred, &t, 1.0).unwrap();
        assert_eq!(loss, loss2);
    }

    #[test]
    fn ctr_loss_empty_foreground() {
        let pc = cloud(&[(0.0, 0.0, 0.0)]);
        let t = make_aux_targets(&pc, &[]);
        let (loss, grads) = ctr_loss(&[[1.0, 2.0, 3.0]], &t, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads[0], [0.0; 3]);
    }

    #[test]
    fn focal_cls_single_anchor() {
        let (loss, _) = cls_focal_loss(&[0.5], 1, &[Some(0)], 0.25, 2.0).unwrap();
        assert_relative_eq!(loss, 0.043322, epsilon = 1e-6);
        // all slots confident and correct
        let (loss, _) =
            cls_focal_loss(&[1.0, 0.0, 0.0, 1.0], 2, &[Some(0), Some(1)], 0.25, 2.0).unwrap();
        assert!(loss < 1e-10);
    }

    #[test]
    fn focal_cls_degenerates_to_nll() {
        // gamma = 0, alpha = 1, one class: mean negative log-likelihood
        let probs = [0.25, 0.5, 0.8];
        let labels = [Some(0), Some(0), Some(0)];
        let (loss, _) = cls_focal_loss(&probs, 1, &labels, 1.0, 0.0).unwrap();
        let nll = -(0.25f64.ln() + 0.5f64.ln() + 0.8f64.ln()) / 3.0;
        assert_relative_eq!(loss, nll, epsilon = 1e-9);
    }

    #[test]
    fn focal_cls_shape_mismatch() {
        assert!(cls_focal_loss(&[0.5, 0.5, 0.5], 2, &[Some(0)], 0.25, 2.0).is_err());
        assert!(cls_focal_loss(&[0.5], 1, &[Some(3)], 0.25, 2.0).is_err());
    }

    #[test]
    fn box_reg_examples() {
        let target = [[0.0; 8]];
        let (loss, _) = box_reg_loss(&target, &target, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        let mut pred = [[0.0; 8]];
        pred[0][0] = 0.5;
        let (loss, grads) = box_reg_loss(&pred, &target, 1.0).unwrap();
        assert_relative_eq!(loss, 0.125);
        assert_relative_eq!(grads[0][0], 0.5);
        // deep in the linear regime doubling the error doubles the loss
        pred[0][0] = 40.0;
        let (l1, _) = box_reg_loss(&pred, &target, 1.0).unwrap();
        pred[0][0] = 80.0;
        let (l2, _) = box_reg_loss(&pred, &target, 1.0).unwrap();
        assert_relative_eq!(l2 / l1, 2.0, epsilon = 0.02);
    }

    #[test]
    fn orient_ce_examples() {
        let (loss, _) = orient_ce_loss(&[[10.0, -10.0]], &[0]).unwrap();
        assert!(loss < 1e-8);
        let (loss, grads) = orient_ce_loss(&[[0.0, 0.0]], &[0]).unwrap();
        assert_relative_eq!(loss, 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(grads[0][0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(grads[0][1], 0.5, epsilon = 1e-12);
        assert!(orient_ce_loss(&[[0.0, 0.0]], &[2]).is_err());
    }

    #[test]
    fn joint_loss_weighted_sum() {
        let w = LossWeights::default();
        let zero = LossParts::default();
        assert_eq!(joint_loss(&zero, &w), 0.0);
        let parts = LossParts {
            seg: 0.1,
            ctr: 0.05,
            ..LossParts::default()
        };
        let w = LossWeights {
            mu: 2.0,
            lambda: 4.0,
            ..LossWeights::default()
        };
        assert_relative_eq!(joint_loss(&parts, &w), 0.4, epsilon = 1e-12);
        // linear in each part
        let doubled = LossParts {
            seg: 0.2,
            ..parts
        };
        assert_relative_eq!(
            joint_loss(&doubled, &w) - joint_loss(&parts, &w),
            2.0 * 0.1,
            epsilon = 1e-12
        );
    }
}
