"""Learning levels that respect a shared warehouse.

Three products share a warehouse of 20 volume units while their demand grows
to about twice that.  Units that arrive when the warehouse is full are
discarded and charged.  The learner is never told the capacity; the
discard cost in the gradient is what keeps the total level near it.

Run:  python demos/warehouse_capacity.py
"""

from gapsi import Feedback, Gapsi, InventorySystem, ParameterBox, ProductSpec, step
from gapsi.demand import cyclic_demand

V, T = 20.0, 600
spec = ProductSpec(3, purchase=1, holding=0.5, penalty=6, outdating=2, overflow=5)
system = InventorySystem([spec] * 3, capacity=V)
demand = cyclic_demand(T, [[3, 4, 2]], noise=0.5, seed=1, trend=0.006).values
scale = demand.max(axis=0)

learner = Gapsi(system, ParameterBox.uniform(0, 1, 3), eta=0.1, buffer_size=10)
x = system.zero_state()
print(" period  demand total  level total  discarded")
for t in range(1, T + 1):
    features = [scale[k : k + 1] for k in range(3)]
    level = float(learner.theta @ scale)
    u = learner.order(x, features, t)
    out = step(system.join(x, u), demand[t - 1], system, t)
    learner.update(Feedback(demand=demand[t - 1]))
    x = out.next_state
    if t % 50 == 0:
        print(f"{t:7d} {demand[t - 1].sum():13.1f} {level:12.2f} {out.discarded.sum():10.2f}")
print(f"\ncapacity {V}: once demand exceeds it, the summed level hovers around it")
