"""Tour of the autodiff core: build a small graph, run backward, and verify
the analytic gradients against central differences."""

import numpy as np

from streamslu import autodiff as ad

rng = np.random.default_rng(0)

# A tiny two-layer scoring function: tanh(x @ w1 + b1) @ w2, summed.
x = ad.constant(rng.normal(size=(3, 4)))
w1 = ad.parameter(rng.normal(size=(4, 5)))
b1 = ad.parameter(np.zeros((1, 5)))
w2 = ad.parameter(rng.normal(size=(5, 2)))

hidden = ad.tanh(ad.affine(x, w1, b1))
loss = ad.sum_all(ad.matmul(hidden, w2))
print(f"loss value: {loss.value[0, 0]:+.6f}")

ad.backward(loss)
print(f"dL/dw2 row 0: {w2.grad[0].round(4)}")
print(f"dL/db1:      {b1.grad[0].round(4)}")

# Gradients accumulate across graphs until zeroed (that is how batches work).
ad.backward(ad.sum_all(ad.matmul(ad.tanh(ad.affine(x, w1, b1)), w2)))
print(f"after a second backward, dL/db1 doubled: {b1.grad[0].round(4)}")
ad.zero_grads([w1, b1, w2])

# grad_check rebuilds the graph per probe and compares with central
# differences; quadratics agree to rounding, saturating nonlinearities to
# around 1e-8 at the default step.
err = ad.grad_check(
    lambda: ad.sum_all(ad.matmul(ad.tanh(ad.affine(x, w1, b1)), w2)),
    [w1, b1, w2],
)
print(f"grad_check max relative error: {err:.2e}")

# Reusing a spent graph is a contract violation, not silent corruption.
try:
    ad.backward(loss)
except ad.GraphReuseError as e:
    print(f"re-entrant backward correctly rejected: {e}")
