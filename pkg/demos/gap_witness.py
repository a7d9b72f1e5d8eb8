"""
A one-term polynomial that looks like a four-term one
=====================================================

Under uniform +-1 inputs, ``x1`` and the depth-2 decision tree on
``x1, x2, x3`` produce exactly the same output law.  No finite number of
labels ``(x, p(x))`` read one at a time can tell their sparsities apart
from the labels alone.
"""

from sparsetest.core import MultilinearPolynomial, rademacher
from sparsetest.exactdist import output_distribution
from sparsetest.msg import decision_tree_polynomial, disjoint_sum, find_msg_witness

X = rademacher()

tree = decision_tree_polynomial(2)
print("tree     :", tree.to_expression())
print("law(x1)  :", output_distribution(MultilinearPolynomial({(1,): 1}), X).atoms)
print("law(tree):", output_distribution(tree, X).atoms)

# The search runs the structured shortlist first, then a rational grid
# over every sparsity pattern; the hit is certified by exact moments.
w = find_msg_witness(X, 2, 1, 4)
print(w.source, "|", w.p.to_expression(), "~", w.q.to_expression())

# Two trees on disjoint variables match x1 + x2.
pair = disjoint_sum([tree, tree])
print(pair.sparsity, "terms:", output_distribution(pair, X).atoms)
