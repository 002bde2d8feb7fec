import numpy as np
import pytest

from hintnet.autodiff import Tensor, backward


def numeric_grad(f, arr: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``arr``, perturbed in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_grads(build, tensors: list[Tensor], h: float = 1e-4) -> float:
    """Worst relative error between autodiff and central differences over ``tensors``.

    ``build()`` must rebuild the scalar loss from the current tensor data.
    """
    for t in tensors:
        t.grad = None
    backward(build())
    worst = 0.0
    for t in tensors:
        num = numeric_grad(lambda: build().item(), t.data, h)
        worst = max(worst, rel_error(t.grad, num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, ok: bool, detail: str) -> None:
        # parametrised criteria report once per case; keep every case on one line
        if number in results:
            prev_ok, prev_detail = results[number]
            ok, detail = prev_ok and ok, f"{prev_detail}; {detail}"
        results[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
