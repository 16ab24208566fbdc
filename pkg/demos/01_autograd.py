"""
Reverse-mode gradients on numpy arrays
======================================

The model is built on a small autograd engine. This walk-through shows
a forward pass, a backward pass and a finite-difference comparison.
"""

import numpy as np

from pgformer.numerics import Parameter, backward, layer_norm, linear, relu, softmax_rows
from pgformer.numerics.gradcheck import check_gradients

rng = np.random.default_rng(0)

# a two-layer block: linear, relu, layer norm, then a row softmax
W1 = Parameter(rng.normal(size=(4, 6)))
W2 = Parameter(rng.normal(size=(6, 5)))
g = Parameter(np.ones(5))
b = Parameter(np.zeros(5))
x = rng.normal(size=(3, 4))


def loss():
    h = relu(linear(x, W1))
    h = layer_norm(linear(h, W2), g, b)
    return (softmax_rows(h) * h).sum()


L = loss()
backward(L)
print("loss", L.item())
print("dL/dW1 row 0", W1.grad[0])

# every analytic gradient entry against central differences in long double
errors = check_gradients(loss, {"W1": W1, "W2": W2, "gain": g, "bias": b}, h=1e-5, extended=True)
for name, err in errors.items():
    print(f"{name}: max relative error {err:.2e}")

# the same check through the CLI on the tiny PGformer:
#   pgformer gradcheck --size tiny
