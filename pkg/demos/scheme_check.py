"""Does an augmentation keep each class's input distribution? Check the first two moments.

    python3 demos/scheme_check.py
"""

from noisereg import tasks
from noisereg.augment import ADDITIVE, AugmentSpec, NoiseSpec, scheme_check
from noisereg.numkit import DistSpec, RandomStream

data = tasks.lowvar_blobs(0)
for label, dist in [("identity", DistSpec.gaussian(0, 0)), ("small noise", DistSpec.gaussian(0, 0.005)),
                    ("+10 shift", DistSpec.uniform(10, 10)), ("N(0,1) noise", DistSpec.gaussian(0, 1))]:
    spec = AugmentSpec("input", NoiseSpec(ADDITIVE, dist))
    rep = scheme_check(data.x, data.y, spec, 400, RandomStream(1))
    print(f"{label:<13} mean ok {rep.mean_ok!s:<5} cov ok {rep.cov_ok!s:<5} passed {rep.passed}")
