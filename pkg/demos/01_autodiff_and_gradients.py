"""A tour of the differentiation core.

Builds a toy attention-style computation, runs the backward pass, and
compares every gradient against central finite differences.
"""

import numpy as np

import village_hgnn.numgrad as ng

ng.set_precision("f64")
rng = np.random.default_rng(0)

# two trainable matrices and a frozen mixing weight
features = ng.parameter(rng.normal(size=(4, 6)), name="features")
transform = ng.parameter(rng.normal(size=(6, 6)), name="transform")
readout = ng.constant(rng.normal(size=(6, 1)))


def loss_node():
    hidden = ng.relu(ng.matmul(features, transform))
    attention = ng.softmax_rows(ng.leaky_relu(ng.matmul(hidden, transform), 0.2))
    return ng.sum_all(ng.matmul(attention, readout))


loss = loss_node()
print(f"loss = {loss.value[0, 0]:.6f}")

grads = ng.backward(loss, [features, transform])
print(f"d(loss)/d(features) norm  = {np.linalg.norm(grads[features]):.6f}")
print(f"d(loss)/d(transform) norm = {np.linalg.norm(grads[transform]):.6f}")

# central finite differences, the long way around
eps = 1e-5
for node, label in ((features, "features"), (transform, "transform")):
    numeric = np.zeros_like(node.value)
    flat_v, flat_g = node.value.ravel(), numeric.ravel()
    for i in range(flat_v.size):
        orig = flat_v[i]
        flat_v[i] = orig + eps
        up = loss_node().value[0, 0]
        flat_v[i] = orig - eps
        down = loss_node().value[0, 0]
        flat_v[i] = orig
        flat_g[i] = (up - down) / (2 * eps)
    err = np.abs(grads[node] - numeric).max()
    print(f"max |analytic - numeric| for {label}: {err:.2e}")

print("\nsoftmax rows always sum to one:")
x = rng.normal(scale=40.0, size=(3, 5))
print(ng.softmax_rows(ng.constant(x)).value.sum(axis=1))
