"""Worst-case AC-coupling baseline wander of a PRBS stream, in units of the half swing.

The coupler is a first-order highpass, so the wander is the lowpassed
+/-1 data sequence. Prints the peak over the first ``--bits`` bits for a few
coupling time constants.
"""
from __future__ import annotations

import argparse
import math

import numpy as np
from scipy.signal import lfilter

from serdes_link.prbs import LfsrSpec, prbs_generate


def peak_wander(order: int, n_bits: int, tau_ui: float) -> tuple[float, int]:
    x = prbs_generate(LfsrSpec(order), n_bits).astype(float) * 2 - 1
    a = -math.expm1(-1 / tau_ui)
    m = lfilter([a], [1, a - 1], x, zi=[0.0])[0]
    settle = int(min(3 * tau_ui, n_bits // 2))
    k = int(np.argmax(np.abs(m[settle:]))) + settle
    return float(abs(m[k])), k


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bits", type=int, default=1_000_000)
    p.add_argument("--order", type=int, default=31)
    args = p.parse_args()
    for tau in (1e3, 1e4, 1e5, 1e6):
        w, k = peak_wander(args.order, args.bits, tau)
        print(f"tau = {tau:>9.0f} UI: peak wander {100 * w:6.2f}% of half swing at UI {k}")
