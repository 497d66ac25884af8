"""Why the side of the derivative matters.

A single product with a two-period lifetime sees no demand for 100 periods,
then one unit per period.  The learner starts mid-box and is driven down to
zero while nothing sells.  At zero, ordering up to the level and the level
itself coincide, so the policy sits on a kink:

* with left derivatives the order does not react to a small increase of the
  level, the gradient is zero and the level never moves again;
* with right derivatives the order does react, so once demand returns the
  shortage cost pushes the level back up.

Run:  python demos/stagnation.py
"""

import numpy as np

from gapsi import Feedback, Gapsi, InventorySystem, ParameterBox, ProductSpec, step

system = InventorySystem([ProductSpec(2, purchase=1, holding=1, penalty=10, outdating=1)])
demand = np.r_[np.zeros(100), np.ones(100)][:, None]


def levels(side: str) -> np.ndarray:
    learner = Gapsi(system, ParameterBox.uniform(0, 2, 1), eta=0.1, buffer_size=1, policy_side=side)
    x = system.zero_state()
    out = []
    for t, d in enumerate(demand, start=1):
        out.append(learner.theta[0])
        u = learner.order(x, [np.ones(1)], t)
        x = step(system.join(x, u), d, system, t).next_state
        learner.update(Feedback(demand=d))
    return np.array(out)


left, right = levels("left"), levels("right")
print(" period   left   right   demand")
for t in (1, 10, 20, 50, 100, 101, 105, 110, 120, 150, 200):
    print(f"{t:7d} {left[t - 1]:6.3f} {right[t - 1]:7.3f} {demand[t - 1, 0]:8.0f}")
print(f"\nleft rule: level stays at {left[100:].max():.3f} after demand returns")
print(f"right rule: level back above 0.5 after {np.argmax(right[100:] > 0.5)} periods")
