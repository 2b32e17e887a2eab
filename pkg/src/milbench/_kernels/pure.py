"""Pure-python (numpy) kernels for the gated-attention aggregator.

The compiled extension in ``_core.pyx`` implements the same two entry
points; either backend may be active, see ``_kernels/__init__``.

Shapes: H is (n, d) tile features, V and U are (h, d), w is (h,),
W_head is (c, d), b_head is (c,). All arrays float64, C-contiguous.
"""

import numpy as np

BACKEND = "pure"

KIND_CLASSIFICATION = 0
KIND_REGRESSION = 1


def gma_forward(V, U, w, W_head, b_head, H):
    """Return (attention, embedding, output) for one bag."""
    T = np.tanh(H @ V.T)
    S = 1.0 / (1.0 + np.exp(-(H @ U.T)))
    G = T * S
    score = G @ w
    score -= score.max()
    e = np.exp(score)
    att = e / e.sum()
    z = att @ H
    out = W_head @ z + b_head
    return att, z, out


def gma_value_and_grad(V, U, w, W_head, b_head, H, target, kind):
    """Loss and exact gradients for one bag.

    ``kind`` selects softmax cross-entropy (target = class index) or
    half squared error with a single output (target = real scalar).
    Returns (loss, out, dV, dU, dw, dW_head, db_head).
    """
    T = np.tanh(H @ V.T)
    S = 1.0 / (1.0 + np.exp(-(H @ U.T)))
    G = T * S
    score = G @ w
    score -= score.max()
    e = np.exp(score)
    att = e / e.sum()
    z = att @ H
    out = W_head @ z + b_head

    if kind == KIND_CLASSIFICATION:
        y = int(target)
        shifted = out - out.max()
        lse = np.log(np.exp(shifted).sum())
        loss = lse - shifted[y]
        dout = np.exp(shifted - lse)
        dout[y] -= 1.0
    else:
        r = out[0] - float(target)
        loss = 0.5 * r * r
        dout = np.array([r])

    dW_head = np.outer(dout, z)
    db_head = dout.copy()
    dz = W_head.T @ dout
    datt = H @ dz
    dscore = att * (datt - att @ datt)
    dw = G.T @ dscore
    dG = np.outer(dscore, w)
    dA = dG * S * (1.0 - T * T)
    dB = dG * T * S * (1.0 - S)
    dV = dA.T @ H
    dU = dB.T @ H
    return loss, out, dV, dU, dw, dW_head, db_head
