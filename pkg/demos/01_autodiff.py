#!/usr/bin/env python3
"""Reverse-mode autodiff on plain numpy arrays.

Build a small computation, call .backward() on the scalar loss, and compare
one analytic gradient against a central finite difference.
"""

import numpy as np

from audioforge import tensor as T
from audioforge.tensor import Tensor

rng = np.random.default_rng(0)

# leaves: requires_grad=True marks what we differentiate with respect to
x = Tensor(rng.standard_normal((4, 3)).astype(np.float32), requires_grad=True)
w = Tensor(rng.standard_normal((3, 2)).astype(np.float32), requires_grad=True)

# a tiny classifier head: logits -> cross entropy against fixed labels
labels = np.array([0, 1, 1, 0])
loss = T.cross_entropy(T.matmul(T.gelu(x), w), labels)
print("loss:", float(loss.data))

loss.backward()
print("dL/dw shape:", w.grad.shape)
print("dL/dw[0, 0]:", w.grad[0, 0])

# check that single entry with a central finite difference
h = 1e-3
for sign in (+1, -1):
    w.data[0, 0] += sign * h
    val = float(T.cross_entropy(T.matmul(T.gelu(x), w), labels).data)
    if sign > 0:
        plus = val
    else:
        numeric = (plus - val) / (2 * h)
    w.data[0, 0] -= sign * h
print("finite diff:", numeric, "(should match the analytic value above)")

# gradients on leaves accumulate across backward calls; reset by hand
w.grad = None
with T.no_grad():
    frozen = T.matmul(x, w)  # no graph is recorded inside no_grad()
print("no_grad output keeps data only:", frozen.shape)
