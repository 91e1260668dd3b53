"""Weight initialization: plain i.i.d. draws, and the row-column scheme where
each N-by-N-proportional matrix is assembled as W[j, k] = phi(R[j], C[k])
from one row vector and one column vector of independent draws.

A matrix is eligible for the row-column mode when both of its axes carry
resizable (hidden) gammas; everything else is drawn i.i.d. Per-weight RNG
substreams make the result independent of iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .arch import ArchGraph, COL, ROW
from .errors import ParameterError
from .net import Network
from .tensor import DistributionSpec, Rng, constant, gaussian, uniform

PHI_FORMS = ("product", "sum")


def _phi_apply(phi: str, r: np.ndarray, c: np.ndarray) -> np.ndarray:
    if phi == "product":
        return r[:, None] * c[None, :]
    if phi == "sum":
        return r[:, None] + c[None, :]
    raise ParameterError(f"unknown phi form {phi!r}")


def rc_eligible(arch: ArchGraph, name: str) -> bool:
    """True for matrices whose two axes are both resizable hidden axes."""
    w = arch.weight(name)
    if w.kind != "matrix":
        return False
    return (
        arch.axis_gamma(name, ROW).role == "hidden"
        and arch.axis_gamma(name, COL).role == "hidden"
    )


@dataclass(frozen=True)
class InitSpec:
    """Distributions per weight; rc mode carries (row, col) pairs and a phi
    form for each eligible matrix."""

    mode: str  # "iid" | "rc"
    distributions: dict[str, DistributionSpec] = field(default_factory=dict)
    rc_pairs: dict[str, tuple[DistributionSpec, DistributionSpec]] = field(default_factory=dict)
    phi: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("iid", "rc"):
            raise ParameterError(f"unknown init mode {self.mode!r}")
        for name, form in self.phi.items():
            if form not in PHI_FORMS:
                raise ParameterError(f"weight {name}: unknown phi form {form!r}")


def iid_spec(distributions: dict[str, DistributionSpec]) -> InitSpec:
    return InitSpec("iid", distributions=dict(distributions))


def rc_spec(
    arch: ArchGraph,
    rc_pairs: dict[str, tuple[DistributionSpec, DistributionSpec]],
    other: dict[str, DistributionSpec],
    phi="sum",
) -> InitSpec:
    if isinstance(phi, str):
        phi = {name: phi for name in rc_pairs}
    return InitSpec("rc", distributions=dict(other), rc_pairs=dict(rc_pairs), phi=dict(phi))


def _fan_in(arch: ArchGraph, name: str) -> int:
    """Size of the axis the weight contracts against: the column for
    matrices, the vector length for the output vector, 1 for the elementwise
    embedding vector."""
    w = arch.weight(name)
    if w.kind == "matrix":
        return w.shape[1]
    if arch.layers and name == arch.layers[0][0]:
        return 1
    if arch.layers and name == arch.layers[-1][0]:
        return w.shape[0]
    return 1


def nonzero_mean_default(parametrization: str, arch: ArchGraph) -> InitSpec:
    """Per-parametrization i.i.d. defaults: MFP gets the non-zero-mean
    gaussian(1, 3) on weights, SP a symmetric uniform with fan-based bounds,
    muP a zero-mean gaussian with fan-based std. Biases start at zero."""
    if parametrization not in ("SP", "muP", "MFP"):
        raise ParameterError(f"unknown parametrization {parametrization!r}")
    dists: dict[str, DistributionSpec] = {}
    bias_names = {b for _, b in arch.layers if b is not None}
    for w in arch.weights:
        if w.name in bias_names:
            dists[w.name] = constant(0.0)
            continue
        if parametrization == "MFP":
            dists[w.name] = gaussian(1.0, 3.0)
        elif parametrization == "SP":
            bound = sqrt(1.0 / _fan_in(arch, w.name))
            dists[w.name] = uniform(-bound, bound)
        else:
            dists[w.name] = gaussian(0.0, sqrt(1.0 / _fan_in(arch, w.name)))
    return iid_spec(dists)


def uniform_iid_spec(arch: ArchGraph, bound_scale: float = 1.0) -> InitSpec:
    """Symmetric fan-based uniform on weights, zero biases; the init used for
    the SP/MFP heatmap and accuracy experiments."""
    dists: dict[str, DistributionSpec] = {}
    bias_names = {b for _, b in arch.layers if b is not None}
    for w in arch.weights:
        if w.name in bias_names:
            dists[w.name] = constant(0.0)
        else:
            bound = bound_scale * sqrt(1.0 / _fan_in(arch, w.name))
            dists[w.name] = uniform(-bound, bound)
    return iid_spec(dists)


def initialize(net: Network, spec: InitSpec, rng: Rng) -> Network:
    """Fill a network's store from the given init spec. Returns a new Network."""
    arch = net.arch
    store: dict[str, np.ndarray] = {}
    eligible = {w.name for w in arch.weights if rc_eligible(arch, w.name)}

    if spec.mode == "rc":
        missing = eligible - set(spec.rc_pairs)
        if missing:
            raise ParameterError(f"rc init needs (row, col) distributions for {sorted(missing)}")
        extra = set(spec.rc_pairs) - eligible
        if extra:
            raise ParameterError(f"weights not eligible for rc init: {sorted(extra)}")
        plain = {w.name for w in arch.weights} - eligible
    else:
        plain = {w.name for w in arch.weights}

    missing = plain - set(spec.distributions)
    if missing:
        raise ParameterError(f"init spec is missing distributions for {sorted(missing)}")

    for w in arch.weights:
        if spec.mode == "rc" and w.name in eligible:
            mu_r, mu_c = spec.rc_pairs[w.name]
            r = mu_r.draw(rng.substream(f"init/{w.name}/R"), w.shape[0])
            c = mu_c.draw(rng.substream(f"init/{w.name}/C"), w.shape[1])
            store[w.name] = _phi_apply(spec.phi.get(w.name, "sum"), r, c)
        else:
            gen = rng.substream(f"init/{w.name}")
            flat = spec.distributions[w.name].draw(gen, int(np.prod(w.shape)))
            store[w.name] = flat.reshape(w.shape)
    return Network(arch, store, dict(net.meta))


def rc_components(w_shape: tuple[int, int], phi: str, rng: Rng, name: str,
                  mu_r: DistributionSpec, mu_c: DistributionSpec):
    """Draw the (R, C) pair for one matrix; regeneration from these 2N stored
    values reproduces the matrix exactly."""
    r = mu_r.draw(rng.substream(f"init/{name}/R"), w_shape[0])
    c = mu_c.draw(rng.substream(f"init/{name}/C"), w_shape[1])
    return r, c, _phi_apply(phi, r, c)
