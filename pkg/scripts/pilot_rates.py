"""Calibration pilot: measures the rate-experiment slopes at the acceptance
configurations before the acceptance tests freeze them.  Not part of the
test suite."""

import json
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from burgerslab.covariance import DecayLaw
from burgerslab.dynamics import RandomSmoothInitial, SimConfig
from burgerslab.error_lab import (
    CosineMode,
    GaussianNorm,
    galerkin_rate_experiment,
    kl_rate_experiment,
)


def show(tag, result):
    out = {"tag": tag}
    if result.strong_fit:
        out["strong_slope"] = round(result.strong_fit.slope, 4)
        out["strong_r2"] = round(result.strong_fit.r_squared, 4)
    if result.weak_fit:
        out["weak_slope"] = round(result.weak_fit.slope, 4)
        out["weak_r2"] = round(result.weak_fit.r_squared, 4)
    for label, reports in (("strong", result.strong_reports),
                           ("weak", result.weak_reports)):
        for key, rep in sorted(reports.items()):
            out[f"{label}[{key}]"] = (
                f"est={rep.estimate:.4e} se={rep.std_error:.1e} "
                f"ratio={rep.ratio:.3f} noise={rep.metadata.get('noise_dominated')}"
            )
    print(json.dumps(out, indent=1))
    sys.stdout.flush()


def main():
    t0 = time.time()
    law = DecayLaw("polynomial", c=1.0, exponent=4.0)
    ic = RandomSmoothInitial(amplitude=0.75, decay=2.5, delta0=0.25)
    cfg = SimConfig(truncation=128, final_time=0.25, dt=2.5e-4, initial=ic)

    # acceptance criterion 3 verbatim
    res3 = kl_rate_experiment(law, [2, 4, 8, 16], cfg, "strong", n_reps=2000,
                              seed=20250809, r=2, k_max=256, chunk_size=1000,
                              threads=2)
    show("criterion3_kl_strong", res3)
    print(f"[t={time.time()-t0:.0f}s]")

    # criterion 4 verbatim (weak, CRN, 1e4 reps) plus the strong fit it ratios
    res4 = kl_rate_experiment(law, [2, 4, 8, 16], cfg, "both", n_reps=10_000,
                              seed=20250809, r=2, phi=CosineMode(1), k_max=256,
                              chunk_size=1000, threads=2)
    show("criterion4_kl_weak", res4)
    print(f"[t={time.time()-t0:.0f}s]")

    # criterion 5 candidate: trace-class rough decay, strong then weak
    law5 = DecayLaw("polynomial", c=0.5, exponent=1.2)
    q5 = law5.materialize(512)
    ic5 = RandomSmoothInitial(amplitude=0.2, decay=3.0, delta0=0.25)
    cfg5 = SimConfig(truncation=512, final_time=0.1, dt=5e-4, initial=ic5)
    res5s = galerkin_rate_experiment(q5, [8, 16, 32, 64], 512, cfg5, "strong",
                                     n_reps=4096, seed=314159, r=2,
                                     chunk_size=1024, threads=2)
    show("criterion5_galerkin_strong", res5s)
    print(f"[t={time.time()-t0:.0f}s]")

    res5w = galerkin_rate_experiment(q5, [8, 16, 32, 64], 512, cfg5, "weak",
                                     n_reps=16384, seed=314159,
                                     phi=GaussianNorm(1.0), chunk_size=1024,
                                     threads=2)
    show("criterion5_galerkin_weak", res5w)
    print(f"[total {time.time()-t0:.0f}s]")


if __name__ == "__main__":
    main()
