"""Seeing versus doing on a two-variable chain X1 -> X2."""

import numpy as np

import constrained_spn as cs

# P(X1=1)=0.6, P(X2=1|X1=1)=0.9, P(X2=1|X1=0)=0.2
p = np.zeros(4)
for x1 in (0, 1):
    for x2 in (0, 1):
        px1 = 0.6 if x1 else 0.4
        px2 = (0.9 if x2 else 0.1) if x1 else (0.2 if x2 else 0.8)
        p[x1 + 2 * x2] = px1 * px2
chain = cs.full_joint_circuit(["X1", "X2"], p)
table = cs.enumerate_joint(chain)

# Observing X2=1 makes X1=1 more likely ...
print("P(X1=1 | X2=1)      =", round(cs.conditional(chain, {"X1": 1}, {"X2": 1}), 6))
# ... but forcing X2=1 says nothing about its parent.
print("P(X1=1 | do(X2=1))  =", round(cs.interventional(chain, {"X1": 1}, "X2", 1, ["X1"]), 6))
post = cs.table_do(table, "X2", 1, ["X1"])
print("oracle, same query  =", round(cs.table_marginal(post, {"X1": 1}), 6))

# Forcing the parent does move the child.
print("P(X2=1 | do(X1=1))  =", round(cs.interventional(chain, {"X2": 1}, "X1", 1, []), 6))

# As a constraint: intervening on X2 leaves X1 alone, so the residuals vanish.
system = cs.compile_interventional(cs.InterventionalEquality("X2", ("X1",), ("X1",)), chain)
print("residuals:", cs.residual_values(system, chain))
