import numpy as np
import pytest
from conftest import check_grads, numeric_grad
from hypothesis import given, settings
from hypothesis import strategies as st

from hintnet.autodiff import Tensor, backward
from hintnet.geometry import AERIAL, LINE, TERRESTRIAL, PoseWhitening, normalize_quaternion
from hintnet.loss import UncertaintyWeights, aerial_pose_loss, layout_loss, pose_loss, uncertainty_term

Q0 = np.array([[1.0, 0.0, 0.0, 0.0]])


def _weights(**values):
    names = tuple(values) or ("s_x", "s_q")
    w = UncertaintyWeights(names)
    for k, v in values.items():
        w.get(k).data[...] = v
    return w


def test_weights_start_at_zero():
    w = UncertaintyWeights(("s_x", "s_z", "s_q"))
    assert w.values() == {"s_x": 0.0, "s_z": 0.0, "s_q": 0.0}
    assert [n for n, _ in w.named_parameters()] == ["s_x", "s_z", "s_q"]


def test_pose_loss_examples():
    w = _weights(s_x=0.0, s_q=0.0)
    zero = pose_loss(np.zeros((1, 3)), np.zeros((1, 3)), Q0, Q0, w)
    assert abs(zero.item()) < 1e-5
    unit = pose_loss(np.array([[1.0, 0, 0]]), np.zeros((1, 3)), Q0, Q0, w)
    assert unit.item() == pytest.approx(1.0, abs=1e-5)


def test_pose_loss_is_batch_mean_of_unsquared_norms():
    w = _weights(s_x=0.3, s_q=-0.2)
    pred = np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    q_pred = np.array([[1.0, 0, 0, 0], [0.0, 1.0, 0, 0]])
    target_q = np.tile(Q0, (2, 1))
    got = pose_loss(pred, np.zeros((2, 3)), q_pred, target_q, w).item()
    # the zero quaternion residual of row 0 costs sqrt(1e-12) through the smoothed norm
    expected = 3.0 * np.exp(-0.3) + 0.3 + ((1e-6 + np.sqrt(2.0)) / 2) * np.exp(0.2) - 0.2
    assert got == pytest.approx(expected, abs=1e-9)


def test_pose_loss_rejects_bad_target_orientation():
    w = _weights(s_x=0.0, s_q=0.0)
    with pytest.raises(ValueError):
        pose_loss(np.zeros((1, 3)), np.zeros((1, 3)), Q0, np.array([[2.0, 0, 0, 0]]), w)
    with pytest.raises(ValueError):
        pose_loss(np.zeros((1, 3)), np.zeros((1, 3)), Q0, -Q0, w)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 3.0])
def test_stationarity_at_log_residual(r):
    s = Tensor(np.array(np.log(r)), requires_grad=True)
    loss = uncertainty_term(np.array([[r, 0.0, 0.0]]), np.zeros((1, 3)), s)
    backward(loss)
    assert abs(s.grad.item()) < 1e-6
    num = numeric_grad(lambda: uncertainty_term(np.array([[r, 0.0, 0.0]]), np.zeros((1, 3)), s).item(), s.data)
    assert abs(num.item()) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 50.0))
def test_loss_in_s_is_convex_with_minimum_at_log_r(r):
    grid = np.log(r) + np.linspace(-2, 2, 81)
    vals = np.array([uncertainty_term(np.array([[r]]), np.zeros((1, 1)), Tensor(np.array(s))).item() for s in grid])
    assert np.argmin(vals) == 40
    assert np.all(np.diff(vals, 2) > 0)


def test_aerial_loss_examples():
    w = _weights(s_x=0.0, s_z=0.0, s_q=0.0)
    h = np.array([[1.0, 0.0]])
    z = np.zeros((1, 2))
    a = np.zeros((1, 1))
    assert abs(aerial_pose_loss(z, z, a, a, h, h, w).item()) < 1e-5
    assert aerial_pose_loss(z, z, np.ones((1, 1)), a, h, h, w).item() == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        aerial_pose_loss(z, z, a, a, h, h, _weights(s_x=0.0, s_q=0.0))
    with pytest.raises(ValueError):
        aerial_pose_loss(z, z, a, a, h, 2 * h, w)
    # predicted headings are not constrained to unit length
    assert aerial_pose_loss(z, z, a, a, 3 * h, h, w).item() == pytest.approx(2.0, abs=1e-5)


def test_altitude_weight_stationary_at_log_three():
    w = _weights(s_x=0.0, s_z=np.log(3.0), s_q=0.0)
    h = np.array([[0.0, 1.0]])
    z = np.zeros((1, 2))
    backward(aerial_pose_loss(z, z, np.array([[3.0]]), np.zeros((1, 1)), h, h, w))
    assert abs(w.get("s_z").grad.item()) < 1e-6


def test_loss_gradients_match_finite_differences(rng):
    w = _weights(s_x=0.4, s_q=-0.3)
    pred_pos = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    pred_q = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    t_pos = rng.standard_normal((5, 3))
    t_q = normalize_quaternion(rng.standard_normal((5, 4)))
    err = check_grads(lambda: pose_loss(pred_pos, t_pos, pred_q, t_q, w), [pred_pos, pred_q, *w.parameters()])
    assert err < 1e-4
    wa = _weights(s_x=0.1, s_z=0.2, s_q=0.3)
    lat = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    alt = Tensor(rng.standard_normal((4, 1)), requires_grad=True)
    hd = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    t_h = rng.standard_normal((4, 2))
    t_h /= np.linalg.norm(t_h, axis=1, keepdims=True)
    err = check_grads(
        lambda: aerial_pose_loss(lat, np.zeros((4, 2)), alt, np.ones((4, 1)), hd, t_h, wa),
        [lat, alt, hd, *wa.parameters()],
    )
    assert err < 1e-4


class SpyWhitening(PoseWhitening):
    calls = 0

    def dewhiten_tensor(self, w):
        SpyWhitening.calls += 1
        return super().dewhiten_tensor(w)


def test_layout_loss_scores_dewhitened_predictions(rng):
    pos = rng.standard_normal((200, 3)) * 40 + 1000
    q = normalize_quaternion(rng.standard_normal((200, 4)) * 0.1 + [1, 0, 0, 0])
    targets = np.hstack([pos, q])
    fitted = PoseWhitening.fit(TERRESTRIAL, targets)
    spy = SpyWhitening(TERRESTRIAL, fitted.whiteners)
    w = UncertaintyWeights(TERRESTRIAL.weight_names)
    pred_w = spy.whiten(targets[:8])
    loss = layout_loss(Tensor(pred_w), targets[:8], spy, w)
    assert SpyWhitening.calls == 1
    # exact predictions in whitened space are exact in world space: loss ~ 0
    assert abs(loss.item()) < 1e-4
    # a one-unit world-space position error costs one unit, whatever the whitening scale
    shifted = targets[:8].copy()
    shifted[:, 0] += 1.0
    loss = layout_loss(Tensor(spy.whiten(shifted)), targets[:8], spy, w)
    assert loss.item() == pytest.approx(1.0, abs=1e-4)


def test_layout_loss_line_and_aerial(rng):
    t = rng.uniform(0.2, 0.8, (50, 1))
    pw = PoseWhitening.fit(LINE, t)
    w = UncertaintyWeights(LINE.weight_names)
    assert LINE.weight_names == ("s_x",)
    assert layout_loss(Tensor(pw.whiten(t) + 0.0), t, pw, w).item() == pytest.approx(0.0, abs=1e-5)
    yaw = rng.uniform(0, 2 * np.pi, 50)
    ta = np.column_stack([rng.uniform(0, 5000, (50, 2)), rng.uniform(2000, 3000, 50), np.cos(yaw), np.sin(yaw)])
    pa = PoseWhitening.fit(AERIAL, ta)
    wa = UncertaintyWeights(AERIAL.weight_names)
    assert layout_loss(Tensor(pa.whiten(ta)), ta, pa, wa).item() == pytest.approx(0.0, abs=1e-5)
