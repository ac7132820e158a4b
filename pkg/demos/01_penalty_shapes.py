"""
The one-sided Huber penalty
===========================

Tabulates h_delta(x; a=1, b=1) for the constraint x - 1 <= 0 at three widths
and shows the properties the rest of the package leans on. Writes
penalty_shapes.csv (x, delta, h) next to this script; any plotting tool can
draw it.
"""

from pathlib import Path

import numpy as np

from huberpen import Halfspace, dist_halfspace, grad_delta_perturbation_bound, grad_h_delta, h_delta

hs = Halfspace(np.array([1.0]), 1.0)
xs = np.linspace(-0.5, 2.0, 11)
deltas = (0.25, 0.5, 1.0)

# the penalty is zero well inside, quadratic in a band of half-width delta
# around the boundary and linear (the distance) beyond it
print("x      " + "".join(f"d={d:<8}" for d in deltas) + "dist")
for x in xs:
    vals = [h_delta(x, hs, d) for d in deltas]
    print(f"{x:5.2f}  " + "".join(f"{v:<10.4f}" for v in vals) + f"{dist_halfspace(x, hs):.4f}")

# at the boundary every curve passes through delta/4
print("\nh at x=1:", [h_delta(1.0, hs, d) for d in deltas])

# widening the band never lowers the penalty, and every curve sits above the distance
X = np.linspace(-0.5, 2.0, 2001)[:, None]
H = np.stack([h_delta(X, hs, d) for d in deltas])
print("monotone in delta:", bool(np.all(np.diff(H, axis=0) >= 0)))
print("above distance:   ", bool(np.all(H >= dist_halfspace(X, hs))))

# gradients are unit-bounded; changing the width moves them by at most (d1 - d2) / (2 d1)
G1, G2 = grad_h_delta(X, hs, 1.0), grad_h_delta(X, hs, 0.5)
print("max |grad|:", float(np.abs(G1).max()))
print("max grad change 1 -> 0.5:", float(np.abs(G1 - G2).max()),
      "bound", grad_delta_perturbation_bound(1.0, 0.5))

out = Path(__file__).with_name("penalty_shapes.csv")
with open(out, "w") as fh:
    fh.write("x,delta,h\n")
    for d in deltas:
        for x in np.linspace(-0.5, 2.0, 101):
            fh.write(f"{x!r},{d!r},{h_delta(x, hs, d)!r}\n")
print("wrote", out)
