"""Pose regression loss with learned homoscedastic uncertainty weights.

Each target block contributes ``||pred - target||_2 * exp(-s) + s`` where ``s``
is a free scalar trained alongside the network. The norm is the plain
(unsquared) Euclidean norm, computed per sample and then averaged over the
batch. For a fixed residual norm ``r`` the term is minimised at ``s = ln r``.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Module, Tensor, as_tensor, exp, sqrt, tsum
from .geometry import PoseLayout, PoseWhitening

NORM_EPS = 1e-12
UNIT_TOL = 1e-6


class UncertaintyWeights(Module):
    """Learned log-scale weights ``s_x``, ``s_q`` and optionally ``s_z``; all start at 0."""

    def __init__(self, names=("s_x", "s_q"), init: float = 0.0):
        self._names = tuple(names)
        for n in self._names:
            setattr(self, n, Tensor(np.array(init), requires_grad=True, name=n))

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def get(self, name: str) -> Tensor:
        if name not in self._names:
            raise KeyError(f"no uncertainty weight {name!r}; have {self._names}")
        return getattr(self, name)

    def values(self) -> dict[str, float]:
        return {n: float(getattr(self, n).data) for n in self._names}


def smooth_norm(diff: Tensor) -> Tensor:
    """Per-row Euclidean norm of a (batch, d) tensor, smoothed at zero."""
    return sqrt(tsum(diff * diff, axis=1) + NORM_EPS)


def uncertainty_term(pred, target, s: Tensor) -> Tensor:
    """Batch mean of ``||pred - target|| * exp(-s)``, plus ``s``."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} must be equal (batch, d)")
    r = smooth_norm(pred - target)
    return r.mean() * exp(-s) + s


def _check_unit(target: np.ndarray, what: str) -> None:
    n = np.linalg.norm(target, axis=1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise ValueError(f"target {what} must be unit-norm (max deviation {np.abs(n - 1).max():.2e})")


def _check_hemisphere(q: np.ndarray) -> None:
    first = np.argmax(q != 0, axis=1)
    if np.any(q[np.arange(len(q)), first] < 0):
        raise ValueError("target quaternions must lie on the canonical hemisphere")


def pose_loss(pred_pos, target_pos, pred_ori, target_ori, w: UncertaintyWeights) -> Tensor:
    """Position term weighted by ``s_x`` plus quaternion term weighted by ``s_q``."""
    q = np.atleast_2d(as_tensor(target_ori).data)
    _check_unit(q, "orientation")
    _check_hemisphere(q)
    return uncertainty_term(pred_pos, target_pos, w.get("s_x")) + uncertainty_term(
        pred_ori, q, w.get("s_q")
    )


def aerial_pose_loss(
    pred_lateral, target_lateral, pred_alt, target_alt, pred_heading, target_heading, w: UncertaintyWeights
) -> Tensor:
    """Lateral (``s_x``), altitude (``s_z``) and heading (``s_q``) terms.

    Only the target heading must be unit length; predicted headings are free.
    """
    if "s_z" not in w.names:
        raise ValueError("aerial loss needs an altitude weight s_z")
    h = np.atleast_2d(as_tensor(target_heading).data)
    _check_unit(h, "heading")
    return (
        uncertainty_term(pred_lateral, target_lateral, w.get("s_x"))
        + uncertainty_term(pred_alt, target_alt, w.get("s_z"))
        + uncertainty_term(pred_heading, h, w.get("s_q"))
    )


def layout_loss(pred_whitened: Tensor, targets: np.ndarray, whitening: PoseWhitening, w: UncertaintyWeights) -> Tensor:
    """De-whiten a batch of predictions and score it against world-unit targets."""
    layout: PoseLayout = whitening.layout
    parts = whitening.dewhiten_tensor(pred_whitened)
    sl = layout.slices()
    t = np.atleast_2d(targets)
    if layout.name == "terrestrial":
        return pose_loss(parts["position"], t[:, sl["position"]], parts["orientation"], t[:, sl["orientation"]], w)
    if layout.name == "aerial":
        return aerial_pose_loss(
            parts["lateral"], t[:, sl["lateral"]],
            parts["altitude"], t[:, sl["altitude"]],
            parts["heading"], t[:, sl["heading"]],
            w,
        )
    total = None
    for b in layout.blocks:
        term = uncertainty_term(parts[b.name], t[:, sl[b.name]], w.get(b.weight))
        total = term if total is None else total + term
    return total
