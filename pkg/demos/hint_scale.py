"""
How much noise should a training hint carry?
============================================

If training hints sit almost on the answer, the residual network learns to
return the hint and ignores the observation. A moderate scale forces it to
read the input. This demo trains one model per scale from identical seeds
and prints the sweep table.

Run with ``python demos/hint_scale.py [--iterations N]``.
"""

import argparse

from hintnet import HINTED_RESIDUAL, EncoderConfig, HintConfig
from hintnet.synth import build_two_hills
from hintnet.training import TrainConfig, hint_scale_sweep, sweep_table

parser = argparse.ArgumentParser()
parser.add_argument("--iterations", type=int, default=1500)
args = parser.parse_args()

train_set, test_set = build_two_hills(1000, 200, seed=0)
rows = hint_scale_sweep(
    train_set,
    test_set,
    HINTED_RESIDUAL,
    [0.01, 0.1, 0.3, 1.0],
    TrainConfig(iterations=args.iterations, seed=0),
    EncoderConfig(kind="dense", input_dim=32, hidden=(64,)),
    HintConfig(),
    eval_seed=1,
)

# %%
# Lower median distance to the nearest hill is better.
print(sweep_table(rows))
