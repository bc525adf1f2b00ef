"""Layers, losses, optimizers and checkpoint I/O built on the autodiff core."""
from __future__ import annotations

import json
import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, concat, softmax, stack
from .errors import (CheckpointError, DimensionError, EmptyInputError,
                     NotBackpropagatedError)

INIT_RANGE = 0.1           # parameters drawn uniformly from [-0.1, 0.1]
GRAD_CLIP_NORM = 5.0       # global-norm clip applied by every training loop
CKPT_MAGIC = b"AEG-CKPT-1"


class Parameter:
    """Named trainable tensor, uniformly initialized in [-0.1, 0.1]."""

    def __init__(self, name, shape, rng, init="uniform"):
        self.name = name
        if init == "uniform":
            values = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        elif init == "zeros":
            values = np.zeros(shape)
        else:
            raise ValueError(f"unknown init spec {init!r}")
        self.init_spec = init
        self.tensor = Tensor(values, requires_grad=True)

    @property
    def values(self):
        return self.tensor.values

    def set_values(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.tensor.values.shape:
            raise DimensionError(f"checkpoint shape mismatch for {self.name}",
                                 values.shape, self.tensor.values.shape)
        self.tensor = Tensor(values, requires_grad=True)

    def refresh(self):
        """New graph leaf around the current values (drops old graph links)."""
        self.tensor = Tensor(self.tensor.values, requires_grad=True)


class Module:
    """Lightweight container: subclasses register Parameters as attributes."""

    def parameters(self):
        out = []
        for value in vars(self).values():
            if isinstance(value, Parameter):
                out.append(value)
            elif isinstance(value, Module):
                out.extend(value.parameters())
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Parameter):
                        out.append(item)
                    elif isinstance(item, Module):
                        out.extend(item.parameters())
        return out


class Dense(Module):
    """Affine map with optional activation: y = act(W x + b)."""

    def __init__(self, name, in_size, out_size, rng, activation="none"):
        if activation not in ("none", "tanh", "sigmoid", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.weight = Parameter(f"{name}.weight", (in_size, out_size), rng)
        self.bias = Parameter(f"{name}.bias", (out_size,), rng)
        self.in_size = in_size
        self.activation = activation

    def __call__(self, x):
        x = ad.as_tensor(x)
        if x.values.shape[-1] != self.in_size:
            raise DimensionError("dense input size mismatch",
                                 x.values.shape, self.in_size)
        y = x @ self.weight.tensor + self.bias.tensor
        if self.activation == "tanh":
            return y.tanh()
        if self.activation == "sigmoid":
            return y.sigmoid()
        if self.activation == "relu":
            return y.relu()
        return y


class GruCell(Module):
    """Standard GRU recurrence.

    z = sigmoid(Wz x + Uz h + bz); r = sigmoid(Wr x + Ur h + br)
    n = tanh(Wn x + Un (r*h) + bn); h' = (1-z)*h + z*n
    With all-zero parameters, h' = 0.5*h (z=0.5, n=0).
    """

    def __init__(self, name, input_size, hidden_size, rng):
        self.input_size = input_size
        self.hidden_size = hidden_size
        for gate in ("z", "r", "n"):
            setattr(self, f"w{gate}", Parameter(f"{name}.w{gate}",
                                                (input_size, hidden_size), rng))
            setattr(self, f"u{gate}", Parameter(f"{name}.u{gate}",
                                                (hidden_size, hidden_size), rng))
            setattr(self, f"b{gate}", Parameter(f"{name}.b{gate}",
                                                (hidden_size,), rng))

    def step(self, x, h):
        x, h = ad.as_tensor(x), ad.as_tensor(h)
        if x.values.shape[-1] != self.input_size:
            raise DimensionError("GRU input size mismatch",
                                 x.values.shape, self.input_size)
        if h.values.shape[-1] != self.hidden_size:
            raise DimensionError("GRU state size mismatch",
                                 h.values.shape, self.hidden_size)
        z = (x @ self.wz.tensor + h @ self.uz.tensor + self.bz.tensor).sigmoid()
        r = (x @ self.wr.tensor + h @ self.ur.tensor + self.br.tensor).sigmoid()
        n = (x @ self.wn.tensor + (r * h) @ self.un.tensor + self.bn.tensor).tanh()
        one = Tensor(np.ones_like(z.values))
        return (one - z) * h + z * n

    def zero_state(self):
        return Tensor(np.zeros(self.hidden_size))


def bigru_encode(cell_fwd, cell_bwd, inputs):
    """Per-position sum of forward and backward GRU states."""
    inputs = list(inputs)
    if not inputs:
        raise EmptyInputError("bigru_encode of an empty sequence")
    h = cell_fwd.zero_state()
    fwd = []
    for x in inputs:
        h = cell_fwd.step(x, h)
        fwd.append(h)
    h = cell_bwd.zero_state()
    bwd = [None] * len(inputs)
    for i in range(len(inputs) - 1, -1, -1):
        h = cell_bwd.step(inputs[i], h)
        bwd[i] = h
    return [f + b for f, b in zip(fwd, bwd)]


class AttentionLayer(Module):
    """Additive attention: score_t = v . tanh(W [query; key_t] + b)."""

    def __init__(self, name, query_size, key_size, hidden_size, rng):
        self.query_size = query_size
        self.key_size = key_size
        self.scorer = Dense(f"{name}.scorer", query_size + key_size,
                            hidden_size, rng, activation="tanh")
        self.v = Parameter(f"{name}.v", (hidden_size,), rng)
        # widen the score vector so initial scores have O(1) spread;
        # at the default +/-0.1 init the softmax starts near-uniform and
        # the scorer's gradient is a product of two small weights, which
        # stalls attention while the rest of the net fits the marginal
        self.v.set_values(self.v.values * 10.0)

    def __call__(self, query, keys, values=None):
        return attend(self, query, keys, values)


def attend(layer, query, keys, values=None):
    """Softmax-weighted context over `values` scored against `keys`.

    Returns (context, weights). Raises EmptyInputError on zero keys; the
    caller decides the fallback (the encoder substitutes a zero vector for
    an empty outside-character set).
    """
    key_mat = keys if isinstance(keys, Tensor) else (stack(list(keys)) if keys else None)
    if key_mat is None or key_mat.shape[0] == 0:
        raise EmptyInputError("attention over an empty key set")
    if values is None:
        value_mat = key_mat
    else:
        value_mat = values if isinstance(values, Tensor) else stack(list(values))
    if value_mat.shape[0] != key_mat.shape[0]:
        raise DimensionError("attention keys/values length mismatch",
                             key_mat.shape[0], value_mat.shape[0])
    query = ad.as_tensor(query)
    q_rep = stack([query] * key_mat.shape[0])
    scores = layer.scorer(concat([q_rep, key_mat], axis=1)) @ layer.v.tensor
    weights = softmax(scores)
    context = weights @ value_mat
    return context, weights


def cross_entropy(predicted, target_index):
    """-log p[target_index] for a probability-vector tensor."""
    predicted = ad.as_tensor(predicted)
    n = predicted.values.shape[-1]
    if not 0 <= target_index < n:
        raise IndexError(f"target index {target_index} out of range [0, {n})")
    return -(predicted[int(target_index)].log())

def kl_divergence(p, q):
    """KL(p || q) with q clamped below by 1e-9 and 0*log 0 = 0."""
    p, q = ad.as_tensor(p), ad.as_tensor(q)
    if p.values.shape != q.values.shape:
        raise DimensionError("KL operand size mismatch", p.shape, q.shape)
    p_vals = p.values
    safe_p = np.where(p_vals > 0.0, p_vals, 1.0)
    const = float(np.sum(p_vals * np.log(safe_p)))
    q_clamped = Tensor(np.maximum(q.values, 1e-9),
                       requires_grad=q.requires_grad,
                       _links=((q, lambda g: g * (q.values >= 1e-9)),))
    return Tensor(np.array(const)) - (ad.as_tensor(p_vals) * q_clamped.log()).sum()


class Optimizer:
    """Adam (defaults beta1=0.9, beta2=0.999, eps=1e-8) or plain SGD.

    Gradients are zeroed after each apply; step_count increments by one.
    """

    def __init__(self, kind, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {kind!r}")
        self.kind = kind
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._moments = {}

    def apply(self, parameters):
        parameters = list(parameters)
        for p in parameters:
            if p.tensor.grad is None:
                raise NotBackpropagatedError(
                    f"parameter {p.name} has no gradient; run backward first")
        self.step_count += 1
        t = self.step_count
        for p in parameters:
            g = p.tensor.grad
            if self.kind == "sgd":
                new_vals = p.tensor.values - self.learning_rate * g
            else:
                m, v = self._moments.get(p.name, (np.zeros_like(g), np.zeros_like(g)))
                m = self.beta1 * m + (1.0 - self.beta1) * g
                v = self.beta2 * v + (1.0 - self.beta2) * g * g
                self._moments[p.name] = (m, v)
                m_hat = m / (1.0 - self.beta1 ** t)
                v_hat = v / (1.0 - self.beta2 ** t)
                new_vals = p.tensor.values - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.set_values(new_vals)


def clip_gradients(parameters, max_norm=GRAD_CLIP_NORM):
    """Scale all gradients so their global L2 norm is at most `max_norm`."""
    parameters = [p for p in parameters if p.tensor.grad is not None]
    total = np.sqrt(sum(float(np.sum(p.tensor.grad ** 2)) for p in parameters))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for p in parameters:
            p.tensor.grad = p.tensor.grad * scale
    return total


def zero_gradients(parameters):
    for p in parameters:
        p.tensor.zero_grad()


def grad_check(fn, inputs, tolerance=1e-4, step=1e-4):
    """Central finite differences vs analytic gradients of a scalar fn.

    `inputs` is a list of Tensors that `fn` closes over; `fn()` must
    return a scalar Tensor. Finite differences mutate each tensor's
    values in place, so closures observe the perturbation. Returns the
    max relative error across all input entries plus a per-input report.
    """
    inputs = [ad.as_tensor(x) for x in inputs]
    for x in inputs:
        x.requires_grad = True
        x.zero_grad()
    out = fn()
    out.backward()
    report = []
    worst = 0.0
    for k, x in enumerate(inputs):
        analytic = x.grad if x.grad is not None else np.zeros_like(x.values)
        numeric = np.zeros_like(x.values)
        flat = x.values.ravel()
        num_flat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn().item()
            flat[i] = orig - step
            lo = fn().item()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * step)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
        rel = float(np.max(np.abs(analytic - numeric) / denom))
        worst = max(worst, rel)
        report.append({"input": k, "max_rel_error": rel})
    return {"max_rel_error": worst, "passed": worst < tolerance,
            "tolerance": tolerance, "per_input": report}


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, named_arrays):
    """Binary checkpoint: magic, JSON header (names/shapes), raw float64."""
    names = list(named_arrays)
    header = json.dumps(
        [{"name": n, "shape": list(np.asarray(named_arrays[n]).shape)} for n in names]
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + b"\n")
        fh.write(struct.pack("<q", len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(named_arrays[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC) + 1)
        if magic != CKPT_MAGIC + b"\n":
            raise CheckpointError(f"{path}: bad magic header")
        (header_len,) = struct.unpack("<q", fh.read(8))
        entries = json.loads(fh.read(header_len).decode("utf-8"))
        out = {}
        for entry in entries:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated array {entry['name']}")
            out[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return out


def save_module(path, module, extra=None):
    arrays = {p.name: p.values for p in module.parameters()}
    if extra:
        for key, val in extra.items():
            arrays[key] = np.asarray(val, dtype=np.float64)
    save_checkpoint(path, arrays)


def load_module(path, module):
    arrays = load_checkpoint(path)
    for p in module.parameters():
        if p.name not in arrays:
            raise CheckpointError(f"{path}: missing parameter {p.name}")
        p.set_values(arrays[p.name])
    return arrays
