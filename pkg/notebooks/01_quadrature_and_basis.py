"""
Quadrature rules and the orthonormal basis
==========================================

Every parameter gets a Gauss rule for its own probability measure, and the
surrogate is expanded in polynomials orthonormal under that measure. This
script builds both for a small mixed space and checks the properties the
rest of the package leans on.
"""

import numpy as np

from tensoruq.basis import (Distribution, Parameter, ParameterSpace, build_basis,
                            enumerate_multi_indices, gauss_quadrature)

###############################################################################
# A three-point rule for a standard gaussian puts nodes at 0 and +-sqrt(3)
# with weights 1/6, 2/3, 1/6.

rule = gauss_quadrature(Distribution.gaussian(), 3)
print("nodes  ", rule.nodes)
print("weights", rule.weights)

###############################################################################
# The rule integrates polynomials up to degree 2q - 1 exactly. For N(0, 1)
# the even moments are 1, 3, 15, ...

for m in range(6):
    print(m, rule.weights @ rule.nodes ** m)

###############################################################################
# Shifted and scaled distributions map the standard rule affinely.

print(gauss_quadrature(Distribution.gaussian(5.0, 2.0), 3).nodes)
print(gauss_quadrature(Distribution.uniform(0.0, 4.0), 2).nodes)

###############################################################################
# Total-degree multi-indices come out graded, with larger leading entries
# first inside each degree.

print(enumerate_multi_indices(2, 2).tolist())
print(len(enumerate_multi_indices(46, 2)), len(enumerate_multi_indices(57, 2)))

###############################################################################
# A basis set carries, per dimension, the polynomial values at the nodes and
# the same table multiplied by the weights. Their product is the discrete
# Gram matrix, which is the identity as long as q >= p + 1.

space = ParameterSpace((Parameter("vth", Distribution.gaussian(0.4, 0.02), 3),
                        Parameter("width", Distribution.uniform(1.0, 1.2), 3)))
B = build_basis(space, 2)
for V, W in zip(B.node_tables, B.weighted_tables):
    print(np.round(W.T @ V, 12))
