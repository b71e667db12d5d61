"""Independent reference implementations shared by the test modules."""
import math

import numpy as np

from vemo.nn import (
    GruLayerParams,
    VemoArchitecture,
    VemoParams,
    gru_backward,
    gru_forward,
    vemo_backward,
    vemo_forward,
)


def naive_gru(layer, xs, gate, update_gate=None, candidate=math.tanh):
    """Scalar-loop GRU straight from the four recurrence equations."""
    update_gate = update_gate or gate
    f, d = layer.W_z.shape
    h = [0.0] * f
    out = []
    for x in xs:
        z = [update_gate(sum(layer.W_z[i, j] * x[j] for j in range(d))
                         + sum(layer.U_z[i, j] * h[j] for j in range(f))) for i in range(f)]
        r = [gate(sum(layer.W_r[i, j] * x[j] for j in range(d))
                  + sum(layer.U_r[i, j] * h[j] for j in range(f))) for i in range(f)]
        hc = [candidate(sum(layer.W_h[i, j] * x[j] for j in range(d))
                        + sum(layer.U_h[i, j] * r[j] * h[j] for j in range(f))) for i in range(f)]
        h = [(1 - z[i]) * h[i] + z[i] * hc[i] for i in range(f)]
        out.append(list(h))
    return np.array(out)


def scalar_elu(x, alpha=1.0):
    return x if x > 0 else alpha * (math.exp(x) - 1.0)


def scalar_logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def central_fd(fun, arr, h=1e-5):
    """Central differences of scalar ``fun()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = fun()
        arr[i] = old - h
        fm = fun()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def gru_layer_fd_errors(seed, gate="elu", update_gate="logistic", f=3, d=2, k=5, return_sequence=True):
    """Worst relative error of the analytic GRU gradients against central differences."""
    rng = np.random.default_rng(seed)
    layer = GruLayerParams.init(d, f, rng, gate=gate, update_gate=update_gate)
    x = rng.normal(size=(k, d))
    out, _ = gru_forward(layer, x, return_sequence)
    w = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(w * gru_forward(layer, x, return_sequence)[0]))

    _, trace = gru_forward(layer, x, return_sequence)
    grads, dx = gru_backward(layer, trace, w)
    errs = {key: rel_err(grads[key], central_fd(loss, getattr(layer, key))) for key in grads}
    errs["inputs"] = rel_err(dx, central_fd(loss, x))
    return errs


def tiny_model_fd_error(seed, k=6, latent=4, margin=1e-3):
    """Worst relative error of the full-model gradient, with every residual kept away from the MAE kink."""
    arch = VemoArchitecture(encoder_widths=(5, latent), branch_widths=(3,))
    params = VemoParams.init(arch, seed)
    rng = np.random.default_rng(seed + 1000)
    window = rng.normal(size=(k, 8))
    pred = vemo_forward(params, window)
    target = pred + rng.choice([-1.0, 1.0], size=4) * rng.uniform(0.05, 0.5, size=4)
    _, grads = vemo_backward(params, window, target)

    def loss():
        return float(np.mean(np.abs(vemo_forward(params, window) - target)))

    worst = 0.0
    for name, arr in params.tensors.items():
        fd = central_fd(loss, arr)
        # the perturbations never cross a kink when all residuals stay clear of zero
        assert np.all(np.abs(vemo_forward(params, window) - target) > margin)
        worst = max(worst, rel_err(grads[name], fd))
    return worst
