"""Fully connected networks evaluated on plain values or on jets.

Parameters live in one flat float64 vector; each weight layer is a
``(fan_in + 1, fan_out)`` block whose last row is the bias.  The same forward
code serves three callers: plain batched prediction, jet propagation for
residual derivatives, and gradient recording (the parameter argument may be a
:class:`~mfpinn.tape.TapedParams` view, which exposes the same ``layer``
accessor backed by tape variables).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import jets as jm
from . import tape as tp
from .errors import DomainError

_ACTIVATIONS = ("tanh", "linear")

CHECKPOINT_FORMAT = "mfpinn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Layer widths plus one activation tag per weight layer."""

    layer_widths: tuple
    activations: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", acts)
        if len(widths) < 3:
            raise DomainError(
                "architecture needs input, at least one hidden, and output "
                f"widths; got {widths}")
        if any(w < 1 for w in widths):
            raise DomainError(f"layer widths must be positive: {widths}")
        if len(acts) != len(widths) - 1:
            raise DomainError(
                f"{len(widths) - 1} weight layers but {len(acts)} "
                "activation tags")
        for a in acts:
            if a not in _ACTIVATIONS:
                raise DomainError(f"unknown activation {a!r}")

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def n_inputs(self):
        return self.layer_widths[0]

    @property
    def n_outputs(self):
        return self.layer_widths[-1]

    def layer_shape(self, j):
        return (self.layer_widths[j] + 1, self.layer_widths[j + 1])


def mlp(widths):
    """Architecture with tanh hidden layers and a linear output layer."""
    widths = tuple(widths)
    return Architecture(widths, ("tanh",) * (len(widths) - 2) + ("linear",))


def _build_layout(arch):
    layout = []
    offset = 0
    for j in range(arch.n_layers):
        shape = arch.layer_shape(j)
        layout.append((offset, shape))
        offset += shape[0] * shape[1]
    return tuple(layout), offset


class ParamSet:
    """Flat parameter vector with per-layer views and a freeze mask.

    ``freeze[j]`` marks weight layer ``j`` as untouchable by optimizers;
    the values stay bitwise identical through any number of update steps.
    """

    def __init__(self, arch, values=None, freeze=None):
        self.arch = arch
        self.layout, self.n_params = _build_layout(arch)
        if values is None:
            values = np.zeros(self.n_params)
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_params,):
            raise DomainError(
                f"expected {self.n_params} parameters, got {values.shape}")
        self.values = values
        if freeze is None:
            freeze = np.zeros(arch.n_layers, dtype=bool)
        freeze = np.asarray(freeze, dtype=bool)
        if freeze.shape != (arch.n_layers,):
            raise DomainError(
                f"freeze mask must have {arch.n_layers} entries")
        self.freeze = freeze

    @property
    def n_layers(self):
        return self.arch.n_layers

    def layer(self, j):
        offset, shape = self.layout[j]
        return self.values[offset:offset + shape[0] * shape[1]].reshape(shape)

    def copy(self):
        return ParamSet(self.arch, self.values.copy(), self.freeze.copy())

    def tunable_mask(self):
        """Boolean mask over the flat vector; False on frozen layers."""
        mask = np.zeros(self.n_params, dtype=bool)
        for j, (offset, shape) in enumerate(self.layout):
            if not self.freeze[j]:
                mask[offset:offset + shape[0] * shape[1]] = True
        return mask

    def tunable_indices(self):
        return np.flatnonzero(self.tunable_mask())

    def freeze_first(self, n_frozen):
        """Freeze the first ``n_frozen`` weight layers, unfreeze the rest."""
        if not 0 <= n_frozen <= self.n_layers:
            raise DomainError(
                f"cannot freeze {n_frozen} of {self.n_layers} layers")
        self.freeze[:] = False
        self.freeze[:n_frozen] = True
        return self

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_widths": list(self.arch.layer_widths),
            "activations": list(self.arch.activations),
            "freeze": [bool(f) for f in self.freeze],
            "values": [float(v) for v in self.values],
        }

    def save(self, path):
        """Write a JSON checkpoint; float values round-trip bitwise."""
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, payload):
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise DomainError(
                f"not a parameter checkpoint: format={payload.get('format')!r}")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise DomainError(
                f"unsupported checkpoint version {payload.get('version')!r}")
        arch = Architecture(tuple(payload["layer_widths"]),
                            tuple(payload["activations"]))
        return cls(arch, np.array(payload["values"], dtype=float),
                   np.array(payload["freeze"], dtype=bool))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def xavier_init(arch, seed):
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    rng = np.random.default_rng(seed)
    params = ParamSet(arch)
    for j in range(arch.n_layers):
        fan_in, fan_out = arch.layer_widths[j], arch.layer_widths[j + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = params.layer(j)
        w[:fan_in] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        w[fan_in] = 0.0
    return params


def forward(params, inputs):
    """Batched network output for an (n, n_inputs) matrix of inputs."""
    a = inputs if isinstance(inputs, tp.Var) \
        else np.asarray(inputs, dtype=float)
    arch = params.arch
    shape = a.shape
    if len(shape) != 2 or shape[1] != arch.n_inputs:
        raise DomainError(
            f"expected inputs of shape (n, {arch.n_inputs}), got {shape}")
    for j in range(arch.n_layers):
        a = tp.affine(a, params.layer(j))
        if arch.activations[j] == "tanh":
            a = tp.tanh(a)
    return a


def forward_jet(params, input_jets):
    """Propagate one jet per input coordinate through the network.

    Returns one jet per output channel.  The value channels match
    :func:`forward` on the stacked input values bitwise: both paths apply the
    same affine and tanh kernels in the same order.
    """
    arch = params.arch
    if len(input_jets) != arch.n_inputs:
        raise DomainError(
            f"expected {arch.n_inputs} input jets, got {len(input_jets)}")
    coords = input_jets[0].coords
    for j in input_jets[1:]:
        if j.coords != coords:
            raise DomainError("input jets disagree on coords")
    state = jm.Jet2(
        coords,
        tp.colstack([j.value for j in input_jets]),
        tuple(tp.colstack([j.d1[i] for j in input_jets])
              for i in range(len(coords.active))),
        tuple(tp.colstack([j.d2[s] for j in input_jets])
              for s in range(len(coords.second))),
    )
    for j in range(arch.n_layers):
        w = params.layer(j)
        # affine is linear, so derivative channels ride the bias-free map
        state = jm.Jet2(coords,
                        tp.affine(state.value, w),
                        tuple(tp.linmap(g, w) for g in state.d1),
                        tuple(tp.linmap(g, w) for g in state.d2))
        if arch.activations[j] == "tanh":
            state = jm.tanh(state)
    outputs = []
    for k in range(arch.n_outputs):
        outputs.append(jm.Jet2(
            coords,
            tp.col(state.value, k),
            tuple(tp.col(g, k) for g in state.d1),
            tuple(tp.col(g, k) for g in state.d2)))
    return outputs


@dataclass
class AnsatzSpec:
    """Output transform baking initial/boundary values into the surrogate.

    ``offset(xi, x, t)`` and ``scale(xi, x, t)`` each return one term per
    output channel; the constrained output is ``offset + scale * raw``.
    ``scale`` must vanish identically on the constrained boundary, which makes
    the surrogate satisfy those conditions no matter what the network does.
    """

    offset: callable
    scale: callable

    def apply(self, raw_outputs, xi, x, t):
        off = self.offset(xi, x, t)
        sc = self.scale(xi, x, t)
        if len(off) != len(raw_outputs) or len(sc) != len(raw_outputs):
            raise DomainError(
                f"ansatz terms ({len(off)}, {len(sc)}) do not match "
                f"{len(raw_outputs)} outputs")
        return [o + s * r for o, s, r in zip(off, sc, raw_outputs)]


def apply_ansatz(spec, raw_outputs, xi, x, t):
    """Constrained outputs ``offset + scale * raw`` (see :class:`AnsatzSpec`)."""
    return spec.apply(raw_outputs, xi, x, t)
