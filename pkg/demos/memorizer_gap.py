"""A lookup memorizer has zero training loss, so its gap is the full-domain loss.

    python3 demos/memorizer_gap.py
"""

from noisereg import tasks
from noisereg.experiment import Memorizer, gap_exact
from noisereg.net import Loss

for name in tasks.TOY_DOMAINS:
    data = tasks.load_task(name)
    x, _, y = data.part("train")
    rep = gap_exact(Memorizer(x, y), data, Loss.MSE)
    print(f"{name:<11} train {rep.train_loss:.4f}  domain {rep.eval_loss:.4f}  gap {rep.gap:.4f}")
