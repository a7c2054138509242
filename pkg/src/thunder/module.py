"""Parameter containers: a tiny module tree and the convolution layer."""

import math

import numpy as np

from .autodiff import Parameter, get_dtype
from .conv import conv2d

LEAKY_SLOPE = 0.2


class Module:
    """Holds named parameters and child modules in registration order."""

    def __init__(self, name=""):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "name", name)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def add_module(self, key, module):
        setattr(self, key, module)
        return module

    def named_parameters(self):
        out = {}
        for p in self._params.values():
            out[p.name] = p
        for child in self._children.values():
            out.update(child.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state, strict=True):
        params = self.named_parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            unexpected = sorted(set(state) - set(params))
            if missing or unexpected:
                raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, value in state.items():
            if name in params:
                params[name].assign(value)


def _join(prefix, key):
    return f"{prefix}.{key}" if prefix else key


class Conv(Module):
    """Same-padded 2-D convolution with bias.

    ``init`` is ``"kaiming"`` (fan-in, leaky slope 0.2, times ``scale``),
    ``"identity"`` (centre tap passes input i to output i, or the trailing
    ``cout`` inputs when cin > cout) or ``"zeros"``. ``noise`` adds that
    fraction of a Kaiming draw on top of the identity.
    """

    def __init__(self, name, cin, cout, k, rng, init="kaiming", bias=True, scale=1.0, noise=0.0):
        super().__init__(name)
        self.cin, self.cout, self.k = cin, cout, k
        dtype = get_dtype()
        if init == "kaiming":
            gain = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))
            std = gain / math.sqrt(cin * k * k)
            w = scale * rng.normal(0.0, std, size=(cout, cin, k, k))
        elif init == "identity":
            w = np.zeros((cout, cin, k, k))
            offset = cin - cout if cin >= cout else 0
            for o in range(min(cout, cin)):
                w[o, o + offset, k // 2, k // 2] = 1.0
            if noise:
                w += noise * rng.normal(0.0, math.sqrt(1.0 / (cin * k * k)), size=w.shape)
        elif init == "zeros":
            w = np.zeros((cout, cin, k, k))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(w.astype(dtype), _join(name, "weight"))
        self.bias = Parameter(np.zeros(cout, dtype=dtype), _join(name, "bias")) if bias else None

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, stride=1, padding=self.k // 2)
