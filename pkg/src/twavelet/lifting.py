"""Lifting-scheme frequency bisection: Haar lifting and learnable affine coupling.

A split node turns a signal of length N into an approximation ``c`` and a
detail ``d`` of length N/2 each. ``c`` is routed to the low-frequency child
and ``d`` to the high-frequency child.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InvalidInput, NumericalError
from .nn import Module, Subnet
from .signal import FrequencyBand, TimeSeriesWindow
from .tree import GateTree, GateTreeNode


class Mode(str, Enum):
    INN = "inn"
    HAAR = "haar"


def _check_even(x) -> None:
    n = x.shape[-1]
    if n % 2:
        raise InvalidInput(f"signal length must be even, got {n}")


def split(x):
    """Even/odd polyphase split along the last axis (works on arrays and Tensors)."""
    _check_even(x)
    return x[..., 0::2], x[..., 1::2]


def merge(even, odd):
    if isinstance(even, Tensor) or isinstance(odd, Tensor):
        return ad.interleave(ad.as_tensor(even), ad.as_tensor(odd))
    even, odd = np.asarray(even), np.asarray(odd)
    if even.shape != odd.shape:
        raise InvalidInput(f"merge shapes differ: {even.shape} vs {odd.shape}")
    out = np.empty(even.shape[:-1] + (2 * even.shape[-1],), dtype=np.result_type(even, odd))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def haar_step(x):
    """Haar lifting: predict odd from even, then update even by half the detail."""
    even, odd = split(x)
    d = odd - even
    c = even + d * 0.5
    return c, d


def haar_inverse(c, d):
    even = c - d * 0.5
    odd = d + even
    return merge(even, odd)


class CouplingUnit(Module):
    """One frequency bisection operator.

    In INN mode it owns the four subnetworks (two scales, two translations);
    in HAAR mode it holds no parameters.
    """

    def __init__(self, channels: int, mode: Mode | str = Mode.INN, rng=None, dropout_rate: float = 0.5, dtype=np.float32):
        self.mode = Mode(mode)
        self.channels = channels
        if self.mode is Mode.INN:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.phi = Subnet(channels, rng, dropout_rate, dtype=dtype)
            self.psi = Subnet(channels, rng, dropout_rate, dtype=dtype)
            self.rho = Subnet(channels, rng, dropout_rate, dtype=dtype)
            self.eta = Subnet(channels, rng, dropout_rate, dtype=dtype)


def _batched(x):
    x = ad.as_tensor(x)
    if x.ndim == 2:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise InvalidInput(f"expected (C, N) or (B, C, N), got shape {x.shape}")
    return x, False


def _unbatch(t: Tensor) -> Tensor:
    return ad.reshape(t, t.shape[1:])


def coupling_forward(x, unit: CouplingUnit) -> tuple[Tensor, Tensor]:
    """Affine coupling: d = x_odd*exp(phi(x_even)) - rho(x_even); c = x_even*exp(psi(d)) + eta(d)."""
    if unit.mode is Mode.HAAR:
        return haar_step(ad.as_tensor(x))
    xb, squeeze = _batched(x)
    _check_even(xb)
    even, odd = split(xb)
    try:
        d = odd * ad.exp(unit.phi(even)) - unit.rho(even)
        c = even * ad.exp(unit.psi(d)) + unit.eta(d)
    except NumericalError as exc:
        raise NumericalError(f"coupling forward: {exc}") from None
    if squeeze:
        return _unbatch(c), _unbatch(d)
    return c, d


def coupling_inverse(c, d, unit: CouplingUnit) -> Tensor:
    """Closed-form inverse of :func:`coupling_forward`."""
    if unit.mode is Mode.HAAR:
        return haar_inverse(ad.as_tensor(c), ad.as_tensor(d))
    cb, squeeze = _batched(c)
    db, _ = _batched(d)
    if cb.shape != db.shape:
        raise InvalidInput(f"c and d shapes differ: {cb.shape} vs {db.shape}")
    even = (cb - unit.eta(db)) * ad.exp(-unit.psi(db))
    odd = (db + unit.rho(even)) * ad.exp(-unit.phi(even))
    x = merge(even, odd)
    return _unbatch(x) if squeeze else x


@dataclass(frozen=True)
class SubbandFeature:
    band: FrequencyBand
    signal: np.ndarray
    pooled: np.ndarray

    @property
    def energy(self) -> float:
        return float(np.sum(self.signal.astype(np.float64) ** 2))


def make_units(tree: GateTree, channels: int, mode: Mode | str = Mode.INN, seed: int = 0, dropout_rate: float = 0.5, dtype=np.float32) -> dict[int, CouplingUnit]:
    """One untied unit per split node, created in breadth-first unit-id order."""
    rng = np.random.default_rng(seed)
    return {uid: CouplingUnit(channels, mode, rng, dropout_rate, dtype) for uid in tree.unit_ids}


def _unit_for(node: GateTreeNode, units: Mapping[int, CouplingUnit]) -> CouplingUnit:
    unit = units.get(node.unit_id) if node.unit_id is not None else None
    if unit is None:
        raise ConfigError(f"no coupling unit for split node {node.band} (unit_id={node.unit_id})")
    return unit


def decompose_tensor(x: Tensor, tree: GateTree, units: Mapping[int, CouplingUnit]) -> tuple[list[Tensor], list[tuple[Tensor, Tensor]]]:
    """Run the tree on a batch (B, C, N).

    Returns leaf signals in ascending band order and the (input, approximation)
    pair of every split node.
    """
    n = x.shape[-1]
    if n % (2**tree.height):
        raise InvalidInput(f"window length {n} is not divisible by 2^height = {2**tree.height}")
    leaves: list[Tensor] = []
    pairs: list[tuple[Tensor, Tensor]] = []

    def visit(node: GateTreeNode, sig: Tensor) -> None:
        if node.gate == 0:
            leaves.append(sig)
            return
        c, d = coupling_forward(sig, _unit_for(node, units))
        pairs.append((sig, c))
        visit(node.low, c)
        visit(node.high, d)

    visit(tree.root, x)
    return leaves, pairs


def reconstruct_tensor(leaves: list[Tensor], tree: GateTree, units: Mapping[int, CouplingUnit]) -> Tensor:
    """Invert :func:`decompose_tensor` from the ordered leaf signals."""
    it = iter(leaves)

    def visit(node: GateTreeNode) -> Tensor:
        if node.gate == 0:
            return next(it)
        c = visit(node.low)
        d = visit(node.high)
        return coupling_inverse(c, d, _unit_for(node, units))

    return visit(tree.root)


def decompose(window: TimeSeriesWindow | np.ndarray, tree: GateTree, units: Mapping[int, CouplingUnit]) -> list[SubbandFeature]:
    """Per-leaf subband signals of one window, ordered by leaf band."""
    data = window.data if isinstance(window, TimeSeriesWindow) else np.asarray(window)
    dtype = _units_dtype(units, data.dtype)
    with ad.no_grad():
        leaves, _ = decompose_tensor(Tensor(data[None].astype(dtype)), tree, units)
    out = []
    for band, leaf in zip(tree.leaf_order, leaves):
        sig = leaf.data[0]
        out.append(SubbandFeature(band, sig, sig.mean(axis=-1)))
    return out


def reconstruct(features: list[SubbandFeature], tree: GateTree, units: Mapping[int, CouplingUnit]) -> np.ndarray:
    with ad.no_grad():
        x = reconstruct_tensor([Tensor(f.signal[None]) for f in features], tree, units)
    return x.data[0]


def _units_dtype(units: Mapping[int, CouplingUnit], default):
    for u in units.values():
        if u.mode is Mode.INN:
            return u.phi.conv1.weight.dtype
    return np.float64 if default == np.float64 else default
