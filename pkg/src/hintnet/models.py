"""Baseline, Hinted Embedding and Hinted Residual pose regressors.

A model is an encoder (observation -> embedding) followed by a fully connected
head. Hinted variants concatenate a hint in whitened pose space to the
embedding; the residual variant also adds the hint to the head output, so the
head only has to predict a correction. All predictions and hints live in
whitened coordinates; :class:`~hintnet.geometry.PoseWhitening` maps them back.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import MLP, ConvBlock, Dense, Module, Tensor, concat, global_avg_pool, no_grad, relu
from .geometry import LAYOUTS, PoseLayout, PoseWhitening
from .loss import UncertaintyWeights

BASELINE = "baseline"
HINTED_EMBEDDING = "hinted_embedding"
HINTED_RESIDUAL = "hinted_residual"
VARIANTS = (BASELINE, HINTED_EMBEDDING, HINTED_RESIDUAL)

BASELINE_HIDDEN = (2048,)
HINTED_HIDDEN = (1024, 2048, 1024)


@dataclass
class EncoderConfig:
    """Observation encoder settings.

    ``kind="conv"`` stacks (conv 3x3, relu, max-pool 2x2) blocks over a
    ``channels x resolution x resolution`` image, then either averages each
    channel globally (``pool="avg"``) or flattens the final feature map
    (``pool="flatten"``). A strided first block needs ``first_kernel`` chosen
    so its output size stays integral (4 with stride 2 or 4). ``kind="dense"``
    is a relu MLP over a flat vector, used for the one-dimensional worlds.
    """

    kind: str = "conv"
    in_channels: int = 3
    resolution: int = 64
    channels: tuple[int, ...] = (16, 32, 64)
    first_stride: int = 1
    first_kernel: int = 3
    pool: str = "avg"
    input_dim: int = 32
    hidden: tuple[int, ...] = (64,)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        for key in ("channels", "hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class ConvEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        widths = (cfg.in_channels, *cfg.channels)
        self.blocks = [
            ConvBlock(a, b, rng, k=cfg.first_kernel if i == 0 else 3, stride=cfg.first_stride if i == 0 else 1)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        side = cfg.resolution // cfg.first_stride
        for _ in cfg.channels:
            side //= 2
        if side < 1:
            raise ValueError(f"resolution {cfg.resolution} too small for {len(cfg.channels)} blocks")
        self._pool = cfg.pool
        self._side = side
        self.dim = cfg.channels[-1] * (side * side if cfg.pool == "flatten" else 1)

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        if self._pool == "flatten":
            return x.reshape(x.shape[0], -1)
        return global_avg_pool(x)


class DenseEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        widths = (cfg.input_dim, *cfg.hidden)
        self.layers = [Dense(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.dim = widths[-1]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = relu(layer(x))
        return x


def make_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> Module:
    if cfg.kind == "conv":
        if cfg.pool not in ("avg", "flatten"):
            raise ValueError(f"unknown pooling {cfg.pool!r}")
        return ConvEncoder(cfg, rng)
    if cfg.kind == "dense":
        return DenseEncoder(cfg, rng)
    raise ValueError(f"unknown encoder kind {cfg.kind!r}")


class HintedModel(Module):
    """Encoder, pose head and learned loss weights for one architecture variant."""

    def __init__(
        self,
        variant: str,
        encoder_config: EncoderConfig,
        layout: PoseLayout,
        rng: np.random.Generator,
        hidden: tuple[int, ...] | None = None,
        out_gain: float = 0.1,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown model variant {variant!r}; expected one of {VARIANTS}")
        self._variant = variant
        self._encoder_config = encoder_config
        self._layout = layout
        self._out_gain = out_gain
        if hidden is None:
            hidden = BASELINE_HIDDEN if variant == BASELINE else HINTED_HIDDEN
        self._hidden = tuple(hidden)
        self.encoder = make_encoder(encoder_config, rng)
        hint_width = 0 if variant == BASELINE else layout.dim
        self.head = MLP(self.encoder.dim + hint_width, self._hidden, layout.dim, rng, out_gain=out_gain)
        self.weights = UncertaintyWeights(layout.weight_names)
        self.whitening: PoseWhitening | None = None
        self._lock = threading.Lock()
        self._encoder_calls = 0

    # -- descriptors -------------------------------------------------------

    @property
    def variant(self) -> str:
        return self._variant

    @property
    def hinted(self) -> bool:
        return self._variant != BASELINE

    @property
    def layout(self) -> PoseLayout:
        return self._layout

    @property
    def pose_dim(self) -> int:
        return self._layout.dim

    @property
    def encoder_calls(self) -> int:
        return self._encoder_calls

    def config(self) -> dict:
        return {
            "variant": self._variant,
            "layout": self._layout.name,
            "encoder": self._encoder_config.to_dict(),
            "hidden": list(self._hidden),
            "out_gain": self._out_gain,
        }

    @classmethod
    def from_config(cls, cfg: dict, rng: np.random.Generator | None = None) -> "HintedModel":
        return cls(
            cfg["variant"],
            EncoderConfig.from_dict(cfg["encoder"]),
            LAYOUTS[cfg["layout"]],
            rng if rng is not None else np.random.default_rng(0),
            hidden=tuple(cfg["hidden"]),
            out_gain=cfg.get("out_gain", 0.1),
        )

    def head_parameter_count(self) -> int:
        return self.head.num_parameters()

    # -- computation -------------------------------------------------------

    def embed(self, x) -> Tensor:
        with self._lock:
            self._encoder_calls += 1
        return self.encoder(x if isinstance(x, Tensor) else Tensor(x))

    def predict_from_embedding(self, emb: Tensor, hint=None) -> Tensor:
        self._check_hint(hint)
        if not self.hinted:
            return self.head(emb)
        h = hint if isinstance(hint, Tensor) else Tensor(np.atleast_2d(hint))
        if h.shape != (emb.shape[0], self.pose_dim):
            raise ValueError(f"hint shape {h.shape} != ({emb.shape[0]}, {self.pose_dim})")
        out = self.head(concat([emb, h], axis=1))
        if self._variant == HINTED_RESIDUAL:
            out = out + h
        return out

    def forward(self, x, hint=None) -> Tensor:
        """Whitened pose prediction for a batch of observations."""
        self._check_hint(hint)
        return self.predict_from_embedding(self.embed(x), hint)

    __call__ = forward

    def _check_hint(self, hint) -> None:
        if self.hinted and hint is None:
            raise ValueError(f"{self._variant} model needs a hint")
        if not self.hinted and hint is not None:
            raise ValueError("baseline model takes no hint")


def build_model(
    variant: str,
    encoder_config: EncoderConfig,
    pose_dim: int | PoseLayout,
    rng: np.random.Generator | None = None,
    **kwargs,
) -> HintedModel:
    """Assemble a model; ``pose_dim`` 7 selects the terrestrial layout, 5 aerial, 1 the line world."""
    if isinstance(pose_dim, PoseLayout):
        layout = pose_dim
    else:
        by_dim = {7: "terrestrial", 5: "aerial", 1: "line"}
        if pose_dim not in by_dim:
            raise ValueError(f"pose_dim must be one of {sorted(by_dim)}, got {pose_dim}")
        layout = LAYOUTS[by_dim[pose_dim]]
    return HintedModel(variant, encoder_config, layout, rng if rng is not None else np.random.default_rng(0), **kwargs)


# -- hints -------------------------------------------------------------------


@dataclass
class HintConfig:
    """Training hint spread (whitened units) and recurrent inference limits."""

    train_sigma: tuple[float, ...] = (0.3,)
    max_iterations: int = 20
    tolerance: float = 1e-3

    def __post_init__(self):
        self.train_sigma = tuple(float(s) for s in np.atleast_1d(self.train_sigma))
        if any(s <= 0 for s in self.train_sigma):
            raise ValueError("training hint sigma must be positive on every axis")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def sigma_for(self, dim: int) -> np.ndarray:
        s = np.asarray(self.train_sigma)
        if s.size == 1:
            return np.full(dim, s[0])
        if s.size != dim:
            raise ValueError(f"hint sigma has {s.size} entries, pose has {dim} axes")
        return s


def sample_training_hint(gt_whitened, sigma, rng: np.random.Generator) -> np.ndarray:
    """Informed hint: independent Gaussian noise of scale ``sigma`` around the target."""
    gt = np.asarray(gt_whitened, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), gt.shape[-1:])
    if np.any(sigma <= 0):
        raise ValueError("hint sigma must be positive")
    return gt + sigma * rng.standard_normal(gt.shape)


def sample_uninformed_hint(d: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Unit-normal hint(s) in whitened space; shape (d,) or (n, d)."""
    if d < 1:
        raise ValueError("hint dimension must be at least 1")
    return rng.standard_normal(d if n is None else (n, d))


# -- recurrent inference -----------------------------------------------------


@dataclass
class InferenceTrace:
    """Per-iteration predictions of one recurrent inference run."""

    whitened: np.ndarray  # (iterations, d)
    poses: np.ndarray  # de-whitened counterpart
    iterations: int
    converged: bool

    @property
    def final(self) -> np.ndarray:
        return self.poses[-1]


@dataclass
class BatchTrace:
    """Recurrent inference over a batch; rows freeze once they converge."""

    whitened: np.ndarray  # (max_iterations, n, d), converged rows carried forward
    iterations: np.ndarray  # (n,)
    converged: np.ndarray  # (n,)
    poses: np.ndarray = field(default=None)

    def trace(self, i: int) -> InferenceTrace:
        k = int(self.iterations[i])
        return InferenceTrace(self.whitened[:k, i].copy(), self.poses[:k, i].copy(), k, bool(self.converged[i]))


def recurrent_infer_batch(model: HintedModel, x, hint0, config: HintConfig) -> BatchTrace:
    """Feed predictions back as hints, embedding each observation once.

    A row converges at iteration k >= 2 when its prediction moved less than
    ``config.tolerance`` (Euclidean, whitened) since iteration k-1; the initial
    hint does not count as a prediction.
    """
    if not model.hinted:
        raise ValueError("recurrent inference needs a hinted model")
    hint = np.atleast_2d(np.asarray(hint0, dtype=np.float64))
    with no_grad():
        emb = model.embed(x)
        n = emb.shape[0]
        if hint.shape != (n, model.pose_dim):
            raise ValueError(f"initial hints {hint.shape} != ({n}, {model.pose_dim})")
        steps = np.empty((config.max_iterations, n, model.pose_dim))
        iterations = np.zeros(n, dtype=np.int64)
        converged = np.zeros(n, dtype=bool)
        active = np.arange(n)
        for k in range(config.max_iterations):
            pred = model.predict_from_embedding(Tensor(emb.data[active]), hint[active]).data
            steps[k] = steps[k - 1] if k else 0.0
            steps[k, active] = pred
            iterations[active] = k + 1
            if k:
                moved = np.linalg.norm(pred - hint[active], axis=1)
                done = moved < config.tolerance
                converged[active[done]] = True
                active = active[~done]
            hint = steps[k].copy()
            if active.size == 0:
                steps[k + 1 :] = steps[k]
                break
    poses = model.whitening.dewhiten(steps) if model.whitening is not None else steps.copy()
    return BatchTrace(steps, iterations, converged, poses)


def recurrent_infer(model: HintedModel, x, hint0, config: HintConfig) -> InferenceTrace:
    """Single-observation recurrent inference; ``x`` carries a leading batch axis of 1 or none."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    expected = 2 if model._encoder_config.kind == "dense" else 4
    if x.ndim == expected - 1:
        x = x[None]
    return recurrent_infer_batch(model, x, np.atleast_2d(hint0), config).trace(0)
