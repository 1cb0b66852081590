"""The tree-structured wavelet network: decomposition, fusion and classifier."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput
from .lifting import CouplingUnit, Mode, decompose_tensor, make_units
from .nn import ClassifierHead, FusionHead, Module, attention_fuse, classify
from .tree import GateTree

FUSION_MODES = ("attention", "uniform")


class TWaveNet(Module):
    def __init__(
        self,
        tree: GateTree,
        channels: int,
        num_classes: int,
        mode: Mode | str = Mode.INN,
        fusion: str = "attention",
        seed: int = 0,
        dropout_rate: float = 0.5,
        dtype=np.float32,
    ):
        if fusion not in FUSION_MODES:
            raise InvalidInput(f"fusion must be one of {FUSION_MODES}, got {fusion!r}")
        self.tree = tree
        self.channels = channels
        self.num_classes = num_classes
        self.mode = Mode(mode)
        self.fusion_mode = fusion
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        unit_seed = int(rng.integers(2**31))
        self.units: dict[int, CouplingUnit] = make_units(tree, channels, self.mode, unit_seed, dropout_rate, self.dtype)
        self.fusion = FusionHead(channels, rng=rng, dtype=self.dtype)
        self.classifier = ClassifierHead(num_classes, rng=rng, dtype=self.dtype)

    def features(self, x: Tensor) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
        """Pooled leaf features h of shape (B, C, m) plus the split-node pairs."""
        leaves, pairs = decompose_tensor(x, self.tree, self.units)
        pooled = [leaf.mean(axis=-1) for leaf in leaves]
        return ad.stack(pooled, axis=-1), pairs

    def forward(self, x) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise InvalidInput(f"expected input (B, {self.channels}, N), got {x.shape}")
        h, pairs = self.features(x)
        H = attention_fuse(h, self.fusion, uniform=self.fusion_mode == "uniform")
        use_batch = self.training and x.shape[0] >= 2
        probs = classify(H, self.classifier, use_batch_stats=use_batch)
        return probs, pairs

    __call__ = forward

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise InvalidInput(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise InvalidInput(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)
        for name, b in buffers.items():
            b[...] = state[name]
