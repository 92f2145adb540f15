"""Build a small circuit, check it, and ask it questions."""

import numpy as np

import constrained_spn as cs

# A two-variable joint where X1 and X2 tend to agree.
joint = np.array([0.4, 0.1, 0.1, 0.4])  # index = x1 + 2*x2
spn = cs.full_joint_circuit(["X1", "X2"], joint)
print(spn.validate())  # "valid"

# Marginals and conditionals come from one bottom-up pass each.
print("P(X1=1)        =", cs.marginal(spn, {"X1": 1}))
print("P(X1=1 | X2=1) =", cs.conditional(spn, {"X1": 1}, {"X2": 1}))
print("P(X1=1 | X2=0) =", cs.conditional(spn, {"X1": 1}, {"X2": 0}))

# The same circuit with unnormalized weights answers identically:
# queries divide by the total mass S(empty).
scaled = spn.with_weights(spn.weights * 7.0)
print("scaled P(X1=1) =", cs.marginal(scaled, {"X1": 1}))

# Gradients of a marginal w.r.t. every weight, in canonical order.
value, grad = cs.subcircuit_value_and_grad(spn, {"X1": 1})
print("dP(X1=1)/dw    =", np.round(grad, 6))

# Structure that breaks completeness is reported node by node.
bad = cs.Circuit(
    ["X1", "X2"],
    [cs.leaf(0, "X1", True), cs.leaf(1, "X2", True), cs.sum_node(2, [0, 1], [0.5, 0.5])],
    2,
)
print(bad.validate())

# Text round trip keeps every weight bit for bit.
again = cs.deserialize(cs.serialize(spn))
print("round trip equal:", np.array_equal(again.weights, spn.weights))
