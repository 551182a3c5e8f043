"""Regenerate the bundled synthetic elasticity pool.

Values are quantiles of a truncated log-normal for ``sigma - 1`` with median
2.14 (so median sigma = 3.14), with the two extremes pinned at 1.03 and 4303.
No random numbers are used, so the file is reproducible byte for byte.
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

N = 13930
LO, HI, MED, S = 1.03, 4303.0, 3.14, 1.3


def build() -> np.ndarray:
    a = math.log((LO - 1) / (MED - 1)) / S
    b = math.log((HI - 1) / (MED - 1)) / S
    q = (np.arange(1, N + 1) - 0.5) / N
    z = truncnorm.ppf(q, a, b)
    sig = 1.0 + (MED - 1) * np.exp(S * z)
    sig = np.round(sig, 4)
    sig[0], sig[-1] = LO, HI
    return np.clip(sig, LO, HI)


def main(out: Path) -> None:
    sig = build()
    head = [
        "# Synthetic substitution elasticities (not empirical estimates).",
        f"# {N} quantiles of 1 + 2.14*exp({S}*Z), Z truncated standard normal;",
        f"# median 3.14, min {LO}, max {HI}. Regenerate with tools/make_surrogate_pool.py.",
    ]
    out.write_text("\n".join(head + [f"{x:g}" if x == int(x) else repr(float(x)) for x in sig]) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/centralplace/data/elasticities_surrogate.txt")
