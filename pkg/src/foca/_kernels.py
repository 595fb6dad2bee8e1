"""Jitted per-sample network kernels.

Everything here works on the flat float64 parameter vector plus the integer
architecture arrays produced by ``nn_core.arch_data``; no Python objects cross
the boundary. Loops are written out by hand: layer widths at desk scale are
tens of units, where explicit loops beat BLAS dispatch.

Gradient reductions run in fixed sample order, so results are reproducible
bit for bit for a given input. ``fastmath`` stays off for the same reason.
"""

import numpy as np
from numba import njit

JIT_OPTIONS = {"cache": True, "nogil": True}

# activation codes, kept in sync with nn_core.Activation
RELU = 0
SIGMOID = 1
IDENTITY = 2

# loss codes, kept in sync with nn_core.LossKind
SQUARED_ERROR = 0
SOFTMAX_CROSS_ENTROPY = 1


@njit(**JIT_OPTIONS)
def _forward_sample(flat, in_dims, out_dims, acts, w_offs, b_offs, x, act_buf, der_buf):
    """Forward one sample; fills activations and activation derivatives.

    act_buf[l] holds the input to layer l (act_buf[0] is x itself,
    act_buf[n_layers] the network output); der_buf[l] holds the derivative of
    layer l's activation at its pre-activation.
    """
    n_layers = in_dims.shape[0]
    for j in range(in_dims[0]):
        act_buf[0, j] = x[j]
    for l in range(n_layers):
        nin = in_dims[l]
        nout = out_dims[l]
        wo = w_offs[l]
        bo = b_offs[l]
        for o in range(nout):
            s = flat[bo + o]
            base = wo + o * nin
            for j in range(nin):
                s += flat[base + j] * act_buf[l, j]
            if acts[l] == RELU:
                if s > 0.0:
                    act_buf[l + 1, o] = s
                    der_buf[l, o] = 1.0
                else:
                    act_buf[l + 1, o] = 0.0
                    der_buf[l, o] = 0.0
            elif acts[l] == SIGMOID:
                v = 1.0 / (1.0 + np.exp(-s))
                act_buf[l + 1, o] = v
                der_buf[l, o] = v * (1.0 - v)
            else:
                act_buf[l + 1, o] = s
                der_buf[l, o] = 1.0


@njit(**JIT_OPTIONS)
def _loss_and_output_grad(y, t, loss_kind, dy):
    """Loss of one sample plus gradient w.r.t. the network output, into dy."""
    d = y.shape[0]
    if loss_kind == SQUARED_ERROR:
        total = 0.0
        for j in range(d):
            r = y[j] - t[j]
            total += r * r
            dy[j] = 2.0 * r
        return total
    # softmax cross-entropy; targets must sum to one
    mx = y[0]
    for j in range(1, d):
        if y[j] > mx:
            mx = y[j]
    se = 0.0
    for j in range(d):
        se += np.exp(y[j] - mx)
    lse = np.log(se) + mx
    total = 0.0
    for j in range(d):
        dy[j] = np.exp(y[j] - lse) - t[j]
        total += t[j] * (lse - y[j])
    return total


@njit(**JIT_OPTIONS)
def outputs_batch(flat, in_dims, out_dims, acts, w_offs, b_offs, max_dim, X):
    """Network outputs for every row of X, shape (n, d_out)."""
    n = X.shape[0]
    n_layers = in_dims.shape[0]
    d_out = out_dims[n_layers - 1]
    act_buf = np.empty((n_layers + 1, max_dim))
    der_buf = np.empty((n_layers, max_dim))
    out = np.empty((n, d_out))
    for i in range(n):
        _forward_sample(flat, in_dims, out_dims, acts, w_offs, b_offs, X[i], act_buf, der_buf)
        for j in range(d_out):
            out[i, j] = act_buf[n_layers, j]
    return out


@njit(**JIT_OPTIONS)
def loss_grad_batch(flat, in_dims, out_dims, acts, w_offs, b_offs, max_dim, X, T, loss_kind):
    """Summed loss, summed parameter gradient, per-sample input gradients."""
    n = X.shape[0]
    n_layers = in_dims.shape[0]
    d_out = out_dims[n_layers - 1]
    n_params = flat.shape[0]
    act_buf = np.empty((n_layers + 1, max_dim))
    der_buf = np.empty((n_layers, max_dim))
    dy = np.empty(d_out)
    delta = np.empty(max_dim)
    delta_down = np.empty(max_dim)
    grad = np.zeros(n_params)
    grad_in = np.empty((n, in_dims[0]))
    loss_sum = 0.0
    for i in range(n):
        _forward_sample(flat, in_dims, out_dims, acts, w_offs, b_offs, X[i], act_buf, der_buf)
        loss_sum += _loss_and_output_grad(act_buf[n_layers, :d_out], T[i], loss_kind, dy)
        for o in range(d_out):
            delta[o] = dy[o] * der_buf[n_layers - 1, o]
        for l in range(n_layers - 1, -1, -1):
            nin = in_dims[l]
            nout = out_dims[l]
            wo = w_offs[l]
            bo = b_offs[l]
            for o in range(nout):
                d_o = delta[o]
                base = wo + o * nin
                for j in range(nin):
                    grad[base + j] += d_o * act_buf[l, j]
                grad[bo + o] += d_o
            if l > 0:
                for j in range(nin):
                    s = 0.0
                    for o in range(nout):
                        s += flat[wo + o * nin + j] * delta[o]
                    delta_down[j] = s * der_buf[l - 1, j]
                for j in range(nin):
                    delta[j] = delta_down[j]
            else:
                for j in range(nin):
                    s = 0.0
                    for o in range(nout):
                        s += flat[wo + o * nin + j] * delta[o]
                    grad_in[i, j] = s
    return loss_sum, grad, grad_in


@njit(**JIT_OPTIONS)
def per_sample_grad_batch(flat, in_dims, out_dims, acts, w_offs, b_offs, max_dim, X, T, loss_kind):
    """Per-sample parameter gradients stacked into an (n, n_params) matrix."""
    n = X.shape[0]
    n_layers = in_dims.shape[0]
    d_out = out_dims[n_layers - 1]
    n_params = flat.shape[0]
    act_buf = np.empty((n_layers + 1, max_dim))
    der_buf = np.empty((n_layers, max_dim))
    dy = np.empty(d_out)
    delta = np.empty(max_dim)
    delta_down = np.empty(max_dim)
    grads = np.zeros((n, n_params))
    for i in range(n):
        _forward_sample(flat, in_dims, out_dims, acts, w_offs, b_offs, X[i], act_buf, der_buf)
        _loss_and_output_grad(act_buf[n_layers, :d_out], T[i], loss_kind, dy)
        for o in range(d_out):
            delta[o] = dy[o] * der_buf[n_layers - 1, o]
        for l in range(n_layers - 1, -1, -1):
            nin = in_dims[l]
            nout = out_dims[l]
            wo = w_offs[l]
            bo = b_offs[l]
            for o in range(nout):
                d_o = delta[o]
                base = wo + o * nin
                for j in range(nin):
                    grads[i, base + j] = d_o * act_buf[l, j]
                grads[i, bo + o] = d_o
            if l > 0:
                for j in range(nin):
                    s = 0.0
                    for o in range(nout):
                        s += flat[wo + o * nin + j] * delta[o]
                    delta_down[j] = s * der_buf[l - 1, j]
                for j in range(nin):
                    delta[j] = delta_down[j]
    return grads
