"""Bias-free GRU layers, dense decoder branches and the branched VeMo network.

Everything here is plain numpy in float64 with hand-written reverse passes.
Layers accept either a single sequence ``(k, d)`` or a batch ``(B, k, d)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._container import read_container, write_container
from .channels import N_CHANNELS, STATE_CHANNELS
from .errors import ShapeError, StructureError

GATES = ("logistic", "elu")
CANDIDATES = ("tanh", "elu")
CHECKPOINT_MAGIC = b"VEMOCK01"
_GRU_KEYS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h")


# ---------------------------------------------------------------------------
# activations

def elu(x, alpha=1.0):
    """Exponential linear unit: ``x`` for ``x > 0``, ``alpha * (exp(x) - 1)`` otherwise."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x, alpha=1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def logistic(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def logistic_grad(x):
    s = logistic(x)
    return s * (1.0 - s)


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _candidate_fns(candidate, alpha):
    if candidate == "tanh":
        return np.tanh, _tanh_grad
    if candidate == "elu":
        return (lambda a: elu(a, alpha)), (lambda a: elu_grad(a, alpha))
    raise ValueError(f"unknown candidate activation {candidate!r}; expected one of {CANDIDATES}")


def _gate_fns(gate, alpha):
    if gate == "logistic":
        return logistic, logistic_grad
    if gate == "elu":
        return (lambda a: elu(a, alpha)), (lambda a: elu_grad(a, alpha))
    raise ValueError(f"unknown gate activation {gate!r}; expected one of {GATES}")


# ---------------------------------------------------------------------------
# GRU layer

@dataclass
class GruLayerParams:
    """Weights of one GRU layer. Input maps are ``f x d``, recurrent maps ``f x f``."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    gate: str = "logistic"
    alpha: float = 1.0
    candidate: str = "tanh"
    # update-gate activation when it differs from ``gate``
    update_gate: str = None

    def __post_init__(self):
        if self.gate not in GATES or self.update_activation not in GATES:
            raise ValueError(f"unknown gate activation {self.gate!r}/{self.update_gate!r}")
        if self.candidate not in CANDIDATES:
            raise ValueError(f"unknown candidate activation {self.candidate!r}")
        f, d = np.shape(self.W_z)
        for key in ("W_z", "W_r", "W_h"):
            if np.shape(getattr(self, key)) != (f, d):
                raise ShapeError(f"{key} has shape {np.shape(getattr(self, key))}, expected {(f, d)}")
        for key in ("U_z", "U_r", "U_h"):
            if np.shape(getattr(self, key)) != (f, f):
                raise ShapeError(f"{key} has shape {np.shape(getattr(self, key))}, expected {(f, f)}")

    @property
    def update_activation(self):
        return self.update_gate or self.gate

    @property
    def input_dim(self):
        return self.W_z.shape[1]

    @property
    def hidden_dim(self):
        return self.W_z.shape[0]

    def arrays(self):
        return {key: getattr(self, key) for key in _GRU_KEYS}

    @classmethod
    def init(cls, input_dim, hidden_dim, rng, **activations):
        """Uniform init in +-sqrt(1/fan_in) for every matrix."""
        mats = {}
        for key in _GRU_KEYS:
            fan_in = input_dim if key.startswith("W") else hidden_dim
            lim = math.sqrt(1.0 / fan_in)
            shape = (hidden_dim, fan_in)
            mats[key] = rng.uniform(-lim, lim, size=shape)
        return cls(**mats, **activations)


@dataclass
class ForwardTrace:
    """Per-timestep activations cached by :func:`gru_forward`.

    All cached arrays are ``(B, k, f)`` except ``inputs`` which is ``(B, k, d)``;
    ``h_prev[:, t]`` is the state entering step ``t``.
    """

    inputs: np.ndarray
    h_prev: np.ndarray
    a_z: np.ndarray
    a_r: np.ndarray
    a_h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_cand: np.ndarray
    h_last: np.ndarray
    return_sequence: bool
    batched: bool

    @property
    def n_steps(self):
        return self.inputs.shape[1]

    @property
    def per_step_size(self):
        """Number of cached floats per timestep (summed over the batch)."""
        b, _, d = self.inputs.shape
        f = self.h_prev.shape[2]
        return b * (d + 7 * f)

    @property
    def size(self):
        return (
            self.inputs.size + self.h_prev.size + self.a_z.size + self.a_r.size
            + self.a_h.size + self.z.size + self.r.size + self.h_cand.size
        )


def _as_batch(x, ndim_single, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim_single:
        return x[None], False
    if x.ndim == ndim_single + 1:
        return x, True
    raise ShapeError(f"{what} must have {ndim_single} or {ndim_single + 1} dims, got shape {x.shape}")


def gru_forward(layer, inputs, return_sequence=True):
    """Run a GRU layer over ``inputs`` starting from ``h_0 = 0``.

    Parameters
    ----------
    layer : GruLayerParams
    inputs : array, shape (k, d) or (B, k, d)
    return_sequence : bool
        If True return every hidden state ``h_1..h_k``, otherwise only ``h_k``.

    Returns
    -------
    outputs : ndarray
        ``(B, k, f)`` / ``(k, f)`` for sequences, ``(B, f)`` / ``(f,)`` otherwise.
    trace : ForwardTrace
    """
    x, batched = _as_batch(inputs, 2, "GRU input")
    b, k, d = x.shape
    if d != layer.input_dim:
        raise ShapeError(f"GRU input has {d} features, layer expects {layer.input_dim}")
    f = layer.hidden_dim
    gate, _ = _gate_fns(layer.gate, layer.alpha)
    ugate, _ = _gate_fns(layer.update_activation, layer.alpha)
    cand, _ = _candidate_fns(layer.candidate, layer.alpha)

    # projections are done per step so a step's arithmetic never depends on
    # the sequence length (keeps truncated runs bit-identical prefixes)
    WT = np.concatenate([layer.W_z, layer.W_r, layer.W_h]).T
    UT = np.concatenate([layer.U_z, layer.U_r]).T
    UhT = layer.U_h.T

    h_prev = np.empty((b, k, f))
    a_z = np.empty((b, k, f))
    a_r = np.empty((b, k, f))
    z = np.empty((b, k, f))
    r = np.empty((b, k, f))
    a_h = np.empty((b, k, f))
    h_cand = np.empty((b, k, f))
    hs = np.empty((b, k, f))

    h = np.zeros((b, f))
    for t in range(k):
        h_prev[:, t] = h
        xp = x[:, t] @ WT
        hp = h @ UT
        a_z[:, t] = xp[:, :f] + hp[:, :f]
        a_r[:, t] = xp[:, f:2 * f] + hp[:, f:]
        z[:, t] = ugate(a_z[:, t])
        r[:, t] = gate(a_r[:, t])
        a_h[:, t] = xp[:, 2 * f:] + (r[:, t] * h) @ UhT
        h_cand[:, t] = cand(a_h[:, t])
        h = (1.0 - z[:, t]) * h + z[:, t] * h_cand[:, t]
        hs[:, t] = h

    trace = ForwardTrace(x, h_prev, a_z, a_r, a_h, z, r, h_cand, h, return_sequence, batched)
    out = hs if return_sequence else h
    return (out if batched else out[0]), trace


def gru_backward(layer, trace, upstream):
    """Exact BPTT through one GRU layer.

    ``upstream`` is the loss gradient w.r.t. the layer outputs and has the
    shape :func:`gru_forward` returned. Returns ``(grads, d_inputs)`` where
    ``grads`` maps ``W_z ... U_h`` to arrays shaped like the parameters.
    """
    f = layer.hidden_dim
    b, k, d = trace.inputs.shape
    if trace.h_prev.shape[2] != f or d != layer.input_dim:
        raise ShapeError("trace does not match layer dimensions")
    g = np.asarray(upstream, dtype=np.float64)
    if not trace.batched:
        g = g[None]
    expected = (b, k, f) if trace.return_sequence else (b, f)
    if g.shape != expected:
        raise ShapeError(f"upstream gradient shape {g.shape}, expected {expected}")
    _, gate_grad = _gate_fns(layer.gate, layer.alpha)
    _, ugate_grad = _gate_fns(layer.update_activation, layer.alpha)
    _, cand_grad = _candidate_fns(layer.candidate, layer.alpha)

    da_z = np.empty((b, k, f))
    da_r = np.empty((b, k, f))
    da_h = np.empty((b, k, f))
    dU_z = np.zeros((f, f))
    dU_r = np.zeros((f, f))
    dU_h = np.zeros((f, f))

    dh = np.zeros((b, f)) if trace.return_sequence else g.copy()
    for t in range(k - 1, -1, -1):
        if trace.return_sequence:
            dh = dh + g[:, t]
        hp = trace.h_prev[:, t]
        z = trace.z[:, t]
        r = trace.r[:, t]
        hc = trace.h_cand[:, t]

        dz = dh * (hc - hp)
        dah = dh * z * cand_grad(trace.a_h[:, t])
        rh = r * hp
        dU_h += dah.T @ rh
        drh = dah @ layer.U_h
        daz = dz * ugate_grad(trace.a_z[:, t])
        dar = drh * hp * gate_grad(trace.a_r[:, t])
        dU_z += daz.T @ hp
        dU_r += dar.T @ hp

        dh = dh * (1.0 - z) + drh * r + daz @ layer.U_z + dar @ layer.U_r
        da_z[:, t] = daz
        da_r[:, t] = dar
        da_h[:, t] = dah

    x = trace.inputs
    grads = {
        "W_z": np.einsum("btf,btd->fd", da_z, x),
        "W_r": np.einsum("btf,btd->fd", da_r, x),
        "W_h": np.einsum("btf,btd->fd", da_h, x),
        "U_z": dU_z,
        "U_r": dU_r,
        "U_h": dU_h,
    }
    dx = da_z @ layer.W_z + da_r @ layer.W_r + da_h @ layer.W_h
    return grads, (dx if trace.batched else dx[0])


# ---------------------------------------------------------------------------
# the branched encoder-decoder

@dataclass(frozen=True)
class VemoArchitecture:
    """Layer widths of the network; everything defaults to the desk-scale model."""

    input_dim: int = N_CHANNELS
    encoder_widths: tuple = (32, 32)
    branch_widths: tuple = (16,)
    gate: str = "elu"
    update_gate: str = "logistic"
    candidate: str = "tanh"
    elu_alpha: float = 1.0
    outputs: tuple = STATE_CHANNELS

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "branch_widths", tuple(int(w) for w in self.branch_widths))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.encoder_widths:
            raise ValueError("encoder needs at least one GRU layer")
        if any(w < 1 for w in self.encoder_widths + self.branch_widths) or self.input_dim < 1:
            raise ValueError("layer widths must be positive")
        if self.gate not in GATES or (self.update_gate or self.gate) not in GATES:
            raise ValueError(f"unknown gate activation {self.gate!r}/{self.update_gate!r}")
        if self.candidate not in CANDIDATES:
            raise ValueError(f"unknown candidate activation {self.candidate!r}")
        if self.elu_alpha <= 0:
            raise ValueError("elu_alpha must be > 0")
        if len(self.outputs) != len(STATE_CHANNELS):
            raise StructureError(
                f"network needs exactly {len(STATE_CHANNELS)} decoder branches, got {len(self.outputs)}"
            )

    @property
    def latent_dim(self):
        return self.encoder_widths[-1]

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "encoder_widths": list(self.encoder_widths),
            "branch_widths": list(self.branch_widths),
            "gate": self.gate,
            "update_gate": self.update_gate,
            "candidate": self.candidate,
            "elu_alpha": self.elu_alpha,
            "outputs": list(self.outputs),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=d["input_dim"],
            encoder_widths=tuple(d["encoder_widths"]),
            branch_widths=tuple(d["branch_widths"]),
            gate=d["gate"],
            update_gate=d.get("update_gate"),
            candidate=d.get("candidate", "tanh"),
            elu_alpha=d["elu_alpha"],
            outputs=tuple(d["outputs"]),
        )

    def tensor_shapes(self):
        """Ordered ``name -> shape`` for every learned matrix."""
        shapes = {}
        d = self.input_dim
        for i, f in enumerate(self.encoder_widths):
            for key in _GRU_KEYS:
                shapes[f"encoder.{i}.{key}"] = (f, d) if key.startswith("W") else (f, f)
            d = f
        for name in self.outputs:
            fan_in = self.latent_dim
            for j, w in enumerate(self.branch_widths + (1,)):
                shapes[f"branch.{name}.{j}"] = (w, fan_in)
                fan_in = w
        return shapes


@dataclass
class VemoParams:
    """All learned weights, keyed by tensor name (see ``VemoArchitecture.tensor_shapes``).

    ``meta`` carries provenance that travels with a checkpoint (window length,
    scaling factors, training cutoff, seed, config hash).
    """

    arch: VemoArchitecture
    tensors: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.arch.tensor_shapes()
        if set(self.tensors) != set(shapes):
            missing = sorted(set(shapes) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(shapes))
            raise StructureError(f"tensor set mismatch; missing={missing} extra={extra}")
        ordered = {}
        for name, shape in shapes.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise StructureError(f"{name} has shape {arr.shape}, expected {shape}")
            ordered[name] = arr
        self.tensors = ordered

    @classmethod
    def init(cls, arch=None, seed=0):
        arch = arch or VemoArchitecture()
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, (rows, cols) in arch.tensor_shapes().items():
            lim = math.sqrt(1.0 / cols)
            tensors[name] = rng.uniform(-lim, lim, size=(rows, cols))
        return cls(arch, tensors)

    def encoder_layer(self, i):
        t = self.tensors
        return GruLayerParams(
            **{key: t[f"encoder.{i}.{key}"] for key in _GRU_KEYS},
            gate=self.arch.gate,
            alpha=self.arch.elu_alpha,
            candidate=self.arch.candidate,
            update_gate=self.arch.update_gate,
        )

    def branch(self, name):
        return [self.tensors[f"branch.{name}.{j}"] for j in range(len(self.arch.branch_widths) + 1)]

    def copy(self):
        return VemoParams(self.arch, {k: v.copy() for k, v in self.tensors.items()}, dict(self.meta))

    def n_parameters(self):
        return sum(v.size for v in self.tensors.values())


def _check_window(params, window):
    x, batched = _as_batch(window, 2, "window")
    if x.shape[2] != params.arch.input_dim:
        raise ShapeError(f"window has {x.shape[2]} channels, network expects {params.arch.input_dim}")
    if x.shape[1] < 1:
        raise ShapeError("window must contain at least one timestep")
    return x, batched


def _forward(params, x):
    arch = params.arch
    traces = []
    h = x
    n = len(arch.encoder_widths)
    for i in range(n):
        h, tr = gru_forward(params.encoder_layer(i), h, return_sequence=(i < n - 1))
        traces.append(tr)
    latent = h
    alpha = arch.elu_alpha
    outs = []
    branch_cache = {}
    for name in arch.outputs:
        mats = params.branch(name)
        acts = [latent]
        pre = []
        a = latent
        for W in mats[:-1]:
            p = a @ W.T
            pre.append(p)
            a = elu(p, alpha)
            acts.append(a)
        outs.append((a @ mats[-1].T)[:, 0])
        branch_cache[name] = (acts, pre)
    pred = np.stack(outs, axis=1)
    return pred, (traces, latent, branch_cache)


def vemo_forward(params, window):
    """Predict the scaled next state ``(a_x, a_y, yaw_rate, v_x)``.

    ``window`` is ``(k, 8)`` (returns a 4-vector) or ``(B, k, 8)`` (returns ``(B, 4)``).
    """
    x, batched = _check_window(params, window)
    pred, _ = _forward(params, x)
    return pred if batched else pred[0]


def mae_loss(pred, target):
    return float(np.mean(np.abs(pred - target)))


def vemo_backward(params, window, target):
    """MAE loss and its gradient for every tensor in ``params``.

    The loss averages ``|pred - target|`` over channels (and the batch when
    ``window`` is batched). The subgradient at an exact tie is 0.
    """
    x, batched = _check_window(params, window)
    y = np.asarray(target, dtype=np.float64)
    if not batched:
        y = y[None]
    if y.shape != (x.shape[0], len(params.arch.outputs)):
        raise ShapeError(f"target shape {np.shape(target)} does not match the prediction")
    pred, (traces, latent, branch_cache) = _forward(params, x)
    diff = pred - y
    loss = float(np.mean(np.abs(diff)))
    dpred = np.sign(diff) / diff.size

    arch = params.arch
    alpha = arch.elu_alpha
    grads = {}
    dlatent = np.zeros_like(latent)
    for c, name in enumerate(arch.outputs):
        mats = params.branch(name)
        acts, pre = branch_cache[name]
        g = dpred[:, c:c + 1]
        j = len(mats) - 1
        grads[f"branch.{name}.{j}"] = g.T @ acts[j]
        g = g @ mats[j]
        for j in range(len(mats) - 2, -1, -1):
            g = g * elu_grad(pre[j], alpha)
            grads[f"branch.{name}.{j}"] = g.T @ acts[j]
            g = g @ mats[j]
        dlatent += g

    g = dlatent
    for i in range(len(arch.encoder_widths) - 1, -1, -1):
        layer_grads, g = gru_backward(params.encoder_layer(i), traces[i], g)
        for key, val in layer_grads.items():
            grads[f"encoder.{i}.{key}"] = val
    ordered = {name: grads[name] for name in params.tensors}
    return loss, ordered


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(params, path):
    header = {
        "format": "vemo-checkpoint",
        "version": 1,
        "arch": params.arch.to_dict(),
        "meta": params.meta,
    }
    write_container(path, CHECKPOINT_MAGIC, header, params.tensors)


def load_checkpoint(path):
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    if header.get("format") != "vemo-checkpoint" or header.get("version") != 1:
        raise StructureError(f"{path}: not a version-1 vemo checkpoint")
    try:
        arch = VemoArchitecture.from_dict(header["arch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"{path}: bad architecture header: {exc}") from None
    return VemoParams(arch, arrays, dict(header.get("meta", {})))
