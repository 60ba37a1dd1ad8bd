#!/usr/bin/env python3
"""Tour of the compute-graph core: forward, backward, gradient reversal,
and the finite-difference oracle."""

import numpy as np

from imda import diffcore as dc

rng = np.random.default_rng(0)

# a two-layer network with a negative log-likelihood head, built by hand
x = dc.const(rng.standard_normal((8, 3)), name="batch")
w1 = dc.param(rng.standard_normal((3, 16)) * 0.5, name="w1")
b1 = dc.param(np.zeros(16), name="b1")
w2 = dc.param(rng.standard_normal((16, 2)) * 0.5, name="w2")
b2 = dc.param(np.zeros(2), name="b2")

hidden = dc.relu(dc.affine(x, w1, b1))
log_probs = dc.log_softmax(dc.affine(hidden, w2, b2))

labels = rng.integers(0, 2, 8)
onehot = np.zeros((8, 2))
onehot[np.arange(8), labels] = 1.0
loss = dc.masked_mean(log_probs, -onehot, name="nll")

value = dc.forward(loss)
print(f"forward loss: {float(value):.6f}")

grads = dc.backward(loss)
print(f"gradient shapes: {[(p.name, g.shape) for p, g in grads.items()]}")

# the analytic gradients against central differences
err = dc.finite_diff_check(loss, step=1e-5)
print(f"max relative error vs central differences: {err:.2e}")

# gradient reversal: forward identity, backward negated
p = dc.param(rng.standard_normal((4, 4)), name="p")
plain = dc.mean(dc.relu(p))
dc.forward(plain)
g_plain = dc.backward(plain)[p]

p2 = dc.param(p.extras["array"].copy(), name="p2")
reversed_loss = dc.mean(dc.relu(dc.neg_grad(p2, lam=1.0)))
dc.forward(reversed_loss)
g_rev = dc.backward(reversed_loss)[p2]
print(f"reversal flips the gradient exactly: {np.array_equal(g_rev, -g_plain)}")

# flat parameter blocks round-trip through their layout
vec = dc.ParameterVector.from_arrays([("w", rng.standard_normal((3, 2))),
                                      ("b", rng.standard_normal(2))])
back = vec.unflatten()
print(f"flatten/unflatten identity: "
      f"{all(np.array_equal(back[n], vec.view(n)) for n in ('w', 'b'))}")
