"""Pose representations, orientation metrics and per-block PCA whitening.

Quaternions are stored (w, x, y, z). Planar aerial poses carry a heading as a
(cos, sin) pair rather than an angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIGEN_FLOOR = 1e-6


@dataclass(frozen=True)
class Pose6D:
    position: np.ndarray
    orientation: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, normalize_quaternion(self.orientation)])


@dataclass(frozen=True)
class PosePlanar:
    x: float
    y: float
    altitude: float
    heading: tuple[float, float]

    @classmethod
    def from_yaw(cls, x: float, y: float, altitude: float, yaw_deg: float) -> "PosePlanar":
        r = np.deg2rad(yaw_deg)
        return cls(x, y, altitude, (float(np.cos(r)), float(np.sin(r))))

    @property
    def yaw_deg(self) -> float:
        return float(np.rad2deg(np.arctan2(self.heading[1], self.heading[0])) % 360.0)

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.altitude, *self.heading], dtype=np.float64)


def normalize_quaternion(q) -> np.ndarray:
    """Unit-normalize ``q`` and flip its sign so the first non-zero entry is positive.

    Works row-wise on an (N, 4) array as well.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 4:
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero quaternion")
    # leave already-unit rows alone so that normalizing twice is bit-exact
    norm = np.where(np.abs(norm - 1.0) <= 8 * np.finfo(np.float64).eps, 1.0, norm)
    u = q / norm
    nz = u != 0
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(u, first[..., None], axis=-1)
    return np.where(lead < 0, -u, u)


def quat_angular_error(q1, q2) -> np.ndarray | float:
    """Rotation angle in degrees between two orientations, in [0, 180]."""
    a = np.asarray(q1, dtype=np.float64)
    b = np.asarray(q2, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("angular error is undefined for a zero quaternion")
    ua = a / na[..., None]
    ub = b / nb[..., None]
    sign = np.where(np.sum(ua * ub, axis=-1) < 0, -1.0, 1.0)[..., None]
    # 2 arccos|<a, b>| via the half-angle atan2 form, which keeps full precision
    # near 0 and returns exactly 0 for q against +-q
    half = np.arctan2(np.linalg.norm(sign * ua - ub, axis=-1), np.linalg.norm(sign * ua + ub, axis=-1))
    err = np.degrees(4.0 * half)
    return float(err) if np.ndim(err) == 0 else err


def heading_error(pred, gt) -> tuple[np.ndarray | float, np.ndarray | bool]:
    """Angle in degrees between predicted and true heading vectors.

    Both vectors are normalized first, so prediction magnitude is ignored. A
    zero-length prediction scores 180 and is flagged degenerate instead of
    raising. Returns ``(error, degenerate)``.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    npn = np.linalg.norm(p, axis=-1)
    ng = np.linalg.norm(g, axis=-1)
    if np.any(ng == 0):
        raise ValueError("ground-truth heading must be non-zero")
    degenerate = npn == 0
    safe = np.where(degenerate, 1.0, npn)
    up = p / safe[..., None]
    ug = g / ng[..., None]
    err = np.degrees(2.0 * np.arctan2(np.linalg.norm(up - ug, axis=-1), np.linalg.norm(up + ug, axis=-1)))
    err = np.where(degenerate, 180.0, err)
    if np.ndim(err) == 0:
        return float(err), bool(degenerate)
    return err, degenerate


def normalize_heading(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    n = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalize a zero heading")
    return h / n


@dataclass
class Whitener:
    """Fitted PCA whitening ``v -> forward @ (v - mean)`` with its exact inverse."""

    mean: np.ndarray
    forward: np.ndarray
    inverse: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise ValueError(f"whitener expects dimension {self.dim}, got {v.shape[-1]}")
        return v

    def whiten(self, v) -> np.ndarray:
        v = self._check(v)
        return (v - self.mean) @ self.forward.T

    def dewhiten(self, w) -> np.ndarray:
        w = self._check(w)
        return w @ self.inverse.T + self.mean


def fit_whitener(targets, floor: float = EIGEN_FLOOR) -> Whitener:
    """PCA-whiten an (N, d) target block.

    Uses the N-1 sample covariance; eigenvalues below ``floor`` are raised to it,
    so degenerate directions are scaled up rather than dropped and the map stays
    invertible.
    """
    x = np.asarray(targets, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 targets to fit a whitener, got {x.shape[0]}")
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], floor)
    evecs = evecs[:, order]
    # fix eigenvector signs so refits on identical data give identical transforms
    flip = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])])
    evecs = evecs * np.where(flip == 0, 1.0, flip)
    forward = (evecs / np.sqrt(evals)).T
    inverse = evecs * np.sqrt(evals)
    return Whitener(mean=mu, forward=forward, inverse=inverse)


def whiten(w: Whitener, v) -> np.ndarray:
    return w.whiten(v)


def dewhiten(w: Whitener, v) -> np.ndarray:
    return w.dewhiten(v)


# -- pose layouts ------------------------------------------------------------


@dataclass(frozen=True)
class PoseBlock:
    """A slice of the pose vector that is whitened and penalised on its own."""

    name: str
    dim: int
    weight: str  # which uncertainty scalar scores this block
    kind: str  # "position" | "altitude" | "quaternion" | "heading"


@dataclass(frozen=True)
class PoseLayout:
    name: str
    blocks: tuple[PoseBlock, ...]

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for b in self.blocks:
            out[b.name] = slice(start, start + b.dim)
            start += b.dim
        return out

    @property
    def weight_names(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(b.weight for b in self.blocks))

    def normalize_targets(self, targets) -> np.ndarray:
        """Put orientation blocks of ground-truth poses in canonical form."""
        t = np.array(targets, dtype=np.float64, copy=True)
        for b in self.blocks:
            sl = self.slices()[b.name]
            if b.kind == "quaternion":
                t[..., sl] = normalize_quaternion(t[..., sl])
            elif b.kind == "heading":
                t[..., sl] = normalize_heading(t[..., sl])
        return t


TERRESTRIAL = PoseLayout(
    "terrestrial",
    (PoseBlock("position", 3, "s_x", "position"), PoseBlock("orientation", 4, "s_q", "quaternion")),
)
AERIAL = PoseLayout(
    "aerial",
    (
        PoseBlock("lateral", 2, "s_x", "position"),
        PoseBlock("altitude", 1, "s_z", "altitude"),
        PoseBlock("heading", 2, "s_q", "heading"),
    ),
)
LINE = PoseLayout("line", (PoseBlock("position", 1, "s_x", "position"),))

LAYOUTS = {layout.name: layout for layout in (TERRESTRIAL, AERIAL, LINE)}


@dataclass
class PoseWhitening:
    """One :class:`Whitener` per layout block, applied to full pose vectors."""

    layout: PoseLayout
    whiteners: dict[str, Whitener]

    @classmethod
    def fit(cls, layout: PoseLayout, train_targets, floor: float = EIGEN_FLOOR) -> "PoseWhitening":
        t = layout.normalize_targets(np.atleast_2d(train_targets))
        sl = layout.slices()
        return cls(layout, {b.name: fit_whitener(t[:, sl[b.name]], floor) for b in layout.blocks})

    def whiten(self, poses) -> np.ndarray:
        p = np.asarray(poses, dtype=np.float64)
        out = np.empty_like(p)
        for name, s in self.layout.slices().items():
            out[..., s] = self.whiteners[name].whiten(p[..., s])
        return out

    def dewhiten(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        out = np.empty_like(w)
        for name, s in self.layout.slices().items():
            out[..., s] = self.whiteners[name].dewhiten(w[..., s])
        return out

    def dewhiten_tensor(self, w):
        """Differentiable de-whitening of a (batch, d) prediction tensor, block by block."""
        from .autodiff import dense

        parts = {}
        for name, s in self.layout.slices().items():
            wh = self.whiteners[name]
            parts[name] = dense(w[:, s], wh.inverse.T, wh.mean)
        return parts
