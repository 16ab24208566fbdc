"""
One attention map for two people
================================

Cross-query attention scores every (leader frame, follower frame) pair
once. The row softmax reads the follower for the leader and the column
softmax reads the leader for the follower.
"""

import numpy as np

from pgformer.numerics import Parameter, Tensor, softmax_rows
from pgformer.xqa import XQAParams, attention_map, build_proxy, xqa_forward, xqa_multi

rng = np.random.default_rng(1)
D, M, T = 8, 3, 5
params = XQAParams(D, M, rng)
templates = Parameter(rng.normal(size=(M, D)))
E_l = Tensor(rng.normal(size=(T, D)))
E_f = Tensor(rng.normal(size=(T, D)))

A = attention_map(E_l, E_f, params, templates)
print("score map", A.shape)
print("leader rows sum to", softmax_rows(A).data.sum(axis=1))
print("follower rows sum to", softmax_rows(A.T).data.sum(axis=1))

# the proxy built from the templates is symmetric and positive semi-definite
P = build_proxy(E_l, E_f, params, templates).data
print("proxy asymmetry", np.abs(P - P.T).max())
print("proxy eigenvalues", np.round(np.linalg.eigvalsh(P), 4))

# with a single frame each person simply receives the other's embedding
o_l, o_f = xqa_forward(E_l[:1], E_f[:1], params, templates)
print("T=1 swap exact:", np.array_equal(o_l.data, E_f.data[:1]), np.array_equal(o_f.data, E_l.data[:1]))

# three people: each one attends over the other two
outs = xqa_multi([E_l, E_f, E_f], params, templates)
print("duplicated persons agree:", np.array_equal(outs[1].data, outs[2].data))
