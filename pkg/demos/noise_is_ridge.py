"""Input noise on a linear model acts like an L2 penalty of strength sigma**2.

    python3 demos/noise_is_ridge.py
"""

from noisereg import tasks, verify
from noisereg.experiment import TrainConfig
from noisereg.numkit import RandomStream

w, x, t = [0.7, -1.3], [0.2, 0.9], [0.4]
for sigma in (0.01, 0.1, 0.3):
    rep = verify.verify_bishop(w, x, t, sigma, 10**5, RandomStream(0))
    print(f"sigma={sigma}: MC excess {rep.details['estimate']:.6f}, "
          f"sigma^2|w|^2 {rep.details['closed_form']:.6f}, 3 SE {rep.tolerance:.2e}, pass {rep.passed}")

data = tasks.linreg2d()
cfg = TrainConfig(eta=0.02, epochs=400, minibatch_size=16)
rep = verify.verify_l2_vs_noise_training(data, 0.1, 0.01, cfg)
d = rep.details
print("\nweights after training")
print("  L2 penalty   :", d["w_l2"])
print("  input noise  :", d["w_noise"])
print("  closed form  :", d["w_ridge"])
print("worst relative distance:", round(rep.discrepancy, 5), "pass:", rep.passed)
