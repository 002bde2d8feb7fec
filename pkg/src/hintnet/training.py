"""Training loop, evaluation, hint-scale sweeps and mode statistics."""

from __future__ import annotations

import contextlib
import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .autodiff import Adam, AdamState, backward, no_grad
from .geometry import PoseWhitening, heading_error, quat_angular_error
from .loss import layout_loss
from .models import (
    BASELINE,
    EncoderConfig,
    HintConfig,
    HintedModel,
    build_model,
    recurrent_infer_batch,
    sample_training_hint,
    sample_uninformed_hint,
)
from .synth.dataset import PoseDataset


@contextlib.contextmanager
def strict_mode(enabled: bool = True):
    """Pin BLAS to one thread so reductions happen in a fixed order."""
    if not enabled:
        yield
        return
    with threadpool_limits(limits=1):
        yield


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-4
    hint_sigma: tuple[float, ...] = (0.3,)
    seed: int = 0
    strict: bool = False

    def __post_init__(self):
        self.hint_sigma = tuple(float(s) for s in np.atleast_1d(self.hint_sigma))
        if self.iterations < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("iterations must be >= 0, batch size and learning rate positive")
        if any(s <= 0 for s in self.hint_sigma):
            raise ValueError("hint sigma must be positive")

    def sigma_for(self, dim: int) -> np.ndarray:
        return HintConfig(self.hint_sigma).sigma_for(dim)


AERIAL_HINT_SIGMA = (0.2, 0.2, 0.2, 0.5, 0.5)


@dataclass
class LossLog:
    weight_names: tuple[str, ...]
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    weights: list[tuple[float, ...]] = field(default_factory=list)

    def append(self, step: int, loss: float, weights: dict[str, float]) -> None:
        self.steps.append(step)
        self.losses.append(loss)
        self.weights.append(tuple(weights[n] for n in self.weight_names))

    def weight_trace(self, name: str) -> np.ndarray:
        j = self.weight_names.index(name)
        return np.array([w[j] for w in self.weights])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss", *self.weight_names])
        for s, l, ws in zip(self.steps, self.losses, self.weights):
            w.writerow([s, repr(l), *(repr(v) for v in ws)])
        return buf.getvalue()


@dataclass
class TrainResult:
    model: HintedModel
    log: LossLog
    adam: AdamState


def fit_pose_whitening(ds: PoseDataset) -> PoseWhitening:
    """Fit whiteners on a training split; any other split is refused."""
    if ds.split != "train":
        raise ValueError(f"whiteners may only be fitted on training data, got the {ds.split!r} split")
    return PoseWhitening.fit(ds.layout, ds.targets)


def _batches(n: int, batch: int, rng: np.random.Generator):
    # shuffled epochs; a batch may straddle two epochs
    pool = np.empty(0, dtype=np.int64)
    while True:
        while pool.size < batch:
            pool = np.concatenate([pool, rng.permutation(n)])
        yield pool[:batch]
        pool = pool[batch:]


def train(model: HintedModel, ds: PoseDataset, cfg: TrainConfig, adam: AdamState | None = None) -> TrainResult:
    """Optimise ``model`` on ``ds`` with Adam.

    Whiteners are fitted on ``ds`` unless the model already carries them. Each
    presentation of a sample to a hinted model draws a fresh training hint.
    """
    if ds.layout != model.layout:
        raise ValueError(f"dataset layout {ds.layout.name} != model layout {model.layout.name}")
    if model.whitening is None:
        model.whitening = fit_pose_whitening(ds)
    whitening = model.whitening
    targets = ds.layout.normalize_targets(ds.targets)
    targets_w = whitening.whiten(targets)
    sigma = cfg.sigma_for(model.pose_dim)
    params = dict(model.named_parameters())
    opt = Adam(params, lr=cfg.learning_rate)
    if adam is not None:
        opt.state = adam
    log = LossLog(model.weights.names)
    rng = np.random.default_rng(cfg.seed)
    batches = _batches(len(ds), min(cfg.batch_size, len(ds)), rng)
    with strict_mode(cfg.strict):
        for step in range(1, cfg.iterations + 1):
            idx = next(batches)
            x = ds.get_inputs(idx)
            hint = sample_training_hint(targets_w[idx], sigma, rng) if model.hinted else None
            pred = model.forward(x, hint)
            loss = layout_loss(pred, targets[idx], whitening, model.weights)
            opt.zero_grad()
            backward(loss)
            opt.step()
            log.append(step, float(loss.data), model.weights.values())
    return TrainResult(model, log, opt.state)


# -- evaluation --------------------------------------------------------------


@dataclass
class EvalReport:
    """Median errors over a test set, per-iteration curves and per-sample records.

    ``median_mode_error`` is set for worlds with known alternative poses: the
    distance to the nearest pose consistent with the observation.
    """

    variant: str
    layout: str
    median_position_error: float
    median_angular_error: float | None
    median_mode_error: float | None
    curves: dict[str, list[float]]
    records: list[dict]
    degenerate_headings: int = 0

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d

    def final_predictions(self) -> np.ndarray:
        return np.array([r["prediction"] for r in self.records])


def _errors(layout_name: str, pred: np.ndarray, target: np.ndarray, hyp: np.ndarray | None):
    """Position, angular and mode errors for (n, d) world-unit predictions."""
    out: dict[str, np.ndarray] = {}
    degenerate = np.zeros(len(pred), dtype=bool)
    if layout_name == "line":
        out["position"] = np.abs(pred[:, 0] - target[:, 0])
    elif layout_name == "terrestrial":
        out["position"] = np.linalg.norm(pred[:, :3] - target[:, :3], axis=1)
        out["angular"] = np.atleast_1d(quat_angular_error(pred[:, 3:], target[:, 3:]))
    elif layout_name == "aerial":
        out["position"] = np.linalg.norm(pred[:, :3] - target[:, :3], axis=1)
        out["lateral"] = np.linalg.norm(pred[:, :2] - target[:, :2], axis=1)
        out["altitude"] = np.abs(pred[:, 2] - target[:, 2])
        err, degenerate = heading_error(pred[:, 3:], target[:, 3:])
        out["angular"] = np.atleast_1d(err)
        degenerate = np.atleast_1d(degenerate)
    else:
        raise ValueError(f"unknown layout {layout_name!r}")
    if hyp is not None:
        out["mode"] = np.linalg.norm(pred[:, None, :] - hyp, axis=2).min(axis=1)
    return out, degenerate


def predict_baseline(model: HintedModel, ds: PoseDataset, chunk: int = 256) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(ds), chunk):
            idx = np.arange(start, min(start + chunk, len(ds)))
            out.append(model.forward(ds.get_inputs(idx)).data)
    return np.concatenate(out) if out else np.zeros((0, model.pose_dim))


def evaluate(model: HintedModel, ds: PoseDataset, hint_cfg: HintConfig | None = None, seed: int = 0,
             chunk: int = 256, strict: bool = False) -> EvalReport:
    """Score a trained model on a test split.

    Baselines run one feed-forward pass and ignore ``hint_cfg`` and ``seed``.
    Hinted models start from one unit-normal hint per sample and refine it
    recurrently; curves give the median error after each iteration, with
    converged samples holding their last prediction.
    """
    if model.whitening is None:
        raise ValueError("model has no whitening; train it first")
    hint_cfg = hint_cfg or HintConfig()
    targets = ds.layout.normalize_targets(ds.targets)
    n = len(ds)
    with strict_mode(strict):
        if model.variant == BASELINE:
            steps_w = predict_baseline(model, ds, chunk)[None]
            iterations = np.ones(n, dtype=np.int64)
            converged = np.ones(n, dtype=bool)
        else:
            rng = np.random.default_rng(seed)
            hints = sample_uninformed_hint(model.pose_dim, rng, n)
            parts = []
            for start in range(0, n, chunk):
                sl = slice(start, min(start + chunk, n))
                idx = np.arange(sl.start, sl.stop)
                parts.append(recurrent_infer_batch(model, ds.get_inputs(idx), hints[sl], hint_cfg))
            steps_w = np.concatenate([p.whitened for p in parts], axis=1)
            iterations = np.concatenate([p.iterations for p in parts])
            converged = np.concatenate([p.converged for p in parts])
    steps = model.whitening.dewhiten(steps_w)
    curves: dict[str, list[float]] = {}
    for k in range(steps.shape[0]):
        errs, _ = _errors(ds.layout.name, steps[k], targets, ds.hypotheses)
        for key, e in errs.items():
            curves.setdefault(key, []).append(float(np.median(e)))
    final = steps[-1]
    errs, degenerate = _errors(ds.layout.name, final, targets, ds.hypotheses)
    records = []
    for i in range(n):
        rec = {
            "index": i,
            "prediction": [float(v) for v in final[i]],
            "target": [float(v) for v in targets[i]],
            "iterations": int(iterations[i]),
            "converged": bool(converged[i]),
        }
        rec.update({f"{k}_error": float(v[i]) for k, v in errs.items()})
        records.append(rec)
    return EvalReport(
        variant=model.variant,
        layout=ds.layout.name,
        median_position_error=float(np.median(errs["position"])),
        median_angular_error=float(np.median(errs["angular"])) if "angular" in errs else None,
        median_mode_error=float(np.median(errs["mode"])) if "mode" in errs else None,
        curves=curves,
        records=records,
        degenerate_headings=int(np.count_nonzero(degenerate)),
    )


def write_report(report: EvalReport, out_dir) -> None:
    """``summary.json`` with medians and curves, ``records.jsonl`` one sample per line."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "summary.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    with open(d / "records.jsonl", "w") as fh:
        for r in report.records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def curves_table(report: EvalReport) -> str:
    keys = sorted(report.curves)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", *(f"median_{k}_error" for k in keys)])
    for i in range(len(report.curves[keys[0]])):
        w.writerow([i + 1, *(repr(report.curves[k][i]) for k in keys)])
    return buf.getvalue()


# -- hint scale sweep --------------------------------------------------------


@dataclass
class SweepRow:
    scale: float
    median_position_error: float
    median_angular_error: float | None
    median_mode_error: float | None


def hint_scale_sweep(
    train_ds: PoseDataset,
    test_ds: PoseDataset,
    variant: str,
    scales,
    cfg: TrainConfig,
    encoder_config: EncoderConfig,
    hint_cfg: HintConfig | None = None,
    model_seed: int = 0,
    eval_seed: int = 0,
) -> list[SweepRow]:
    """Train one model per training-hint scale from identical seeds and score each."""
    scales = [float(s) for s in scales]
    if len(scales) < 2:
        raise ValueError("a sweep needs at least two scales")
    rows = []
    for scale in scales:
        model = build_model(variant, encoder_config, train_ds.layout, np.random.default_rng(model_seed))
        run_cfg = TrainConfig(cfg.iterations, cfg.batch_size, cfg.learning_rate, (scale,), cfg.seed, cfg.strict)
        train(model, train_ds, run_cfg)
        rep = evaluate(model, test_ds, hint_cfg, seed=eval_seed, strict=cfg.strict)
        rows.append(SweepRow(scale, rep.median_position_error, rep.median_angular_error, rep.median_mode_error))
    return rows


def sweep_table(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scale", "median_position_error", "median_angular_error", "median_mode_error"])
    for r in rows:
        w.writerow([repr(r.scale), repr(r.median_position_error),
                    "" if r.median_angular_error is None else repr(r.median_angular_error),
                    "" if r.median_mode_error is None else repr(r.median_mode_error)])
    return buf.getvalue()


# -- mode statistics ---------------------------------------------------------


@dataclass
class ModeReport:
    delta: float
    fraction_a: float
    fraction_b: float
    fraction_midpoint: float

    @property
    def fraction_any_mode(self) -> float:
        return self.fraction_a + self.fraction_b


def mode_metrics(predictions, modes: tuple[float, float], midpoint: float, delta: float) -> ModeReport:
    """Fractions of scalar predictions within ``delta`` of each mode and of the midpoint."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    anchors = [float(modes[0]), float(modes[1]), float(midpoint)]
    if delta <= 0:
        raise ValueError("delta must be positive")
    gaps = [abs(a - b) for i, a in enumerate(anchors) for b in anchors[i + 1 :]]
    if min(gaps) <= 2 * delta:
        raise ValueError(f"delta {delta} makes the mode and midpoint regions overlap")
    frac = [float(np.mean(np.abs(p - a) <= delta)) if p.size else 0.0 for a in anchors]
    return ModeReport(delta, *frac)
