"""Turn declarative constraints into residual systems and look at them."""

import numpy as np

import constrained_spn as cs

names = ["X1", "X2", "X3"]
rng = np.random.default_rng(0)
spn = cs.full_joint_circuit(names, rng.dirichlet(np.ones(8)))

# X1 independent of X2: four residuals P(a,b) - P(a) P(b), one per value pair.
indep = cs.compile_independence(cs.Independence("X1", "X2"), spn)
for k in range(len(indep)):
    print(indep.format_residual(k))
print("values:", np.round(cs.residual_values(indep, spn), 6))

# Equal conditionals, cross-multiplied so nothing is ever divided.
cond = cs.compile_conditional(cs.ConditionalEquality("X1", "X2"), spn)
for k in range(len(cond)):
    print(cond.format_residual(k))

# Conditioning on the remaining variables enumerates their assignments.
rest = cs.compile_conditional(cs.ConditionalEquality("X1", "X2", condition_on_rest=True), spn)
print("on-rest residuals:", len(rest))

# Interventions need the declared parents of the intervened variable.
do = cs.compile_interventional(cs.InterventionalEquality("X3", parents=("X1",), targets=("X1", "X2")), spn)
print("interventional residuals:", len(do), "assumption:", do.provenance[0].assumptions[0])

# Exact Jacobians feed the optimizer.
print("jacobian shape:", cs.residual_jacobian(indep, spn).shape)

# Equal-conditional residuals are linear along one block of weights;
# independence residuals are quadratic in general.
block = np.zeros(spn.n_weights)
rs = spn.root_slice()
x2_is_one = ((np.arange(8) >> 1) & 1) == 1
block[rs.start:rs.stop][x2_is_one] = 1.0
print("degree, conditional along X2=1 block:", cs.degree_probe(cond, spn, block))
print("degree, independence along random dir:", cs.degree_probe(indep, spn, rng.normal(size=spn.n_weights)))
