"""Labeled synthetic datasets whose classes differ only in subband content."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInput
from .signal import WindowSet, is_power_of_two

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class SynthSpec:
    num_classes: int = 3
    carriers_hz: list[list[float]] = field(default_factory=lambda: [[4.0], [12.0], [24.0]])
    noise_sigma: float = 0.3
    amplitude_jitter: float = 0.1
    N: int = 128
    sample_rate_hz: float = 64.0
    count_per_class: int = 500
    seed: int = 0
    channels: int = 1

    def validate(self) -> None:
        if self.num_classes < 1 or len(self.carriers_hz) != self.num_classes:
            raise InvalidInput("carriers_hz needs one list of frequencies per class")
        if self.noise_sigma < 0 or self.amplitude_jitter < 0:
            raise InvalidInput("noise_sigma and amplitude_jitter must be >= 0")
        if not is_power_of_two(self.N) or self.N < 2:
            raise InvalidInput(f"N must be a power of two >= 2, got {self.N}")
        nyquist = self.sample_rate_hz / 2
        for cls_carriers in self.carriers_hz:
            for f in cls_carriers:
                if not 0 <= f < nyquist:
                    raise InvalidInput(f"carrier {f} Hz is not below Nyquist {nyquist} Hz")
        if self.count_per_class < 1 or self.channels < 1:
            raise InvalidInput("count_per_class and channels must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> SynthSpec:
        d = json.loads(text)
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _sample(spec: SynthSpec, cls: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(spec.N) / spec.sample_rate_hz
    x = np.zeros((spec.channels, spec.N))
    for f in spec.carriers_hz[cls]:
        phase = rng.uniform(0, 2 * np.pi, size=(spec.channels, 1))
        amp = 1.0 + spec.amplitude_jitter * rng.standard_normal((spec.channels, 1))
        x += amp * np.sin(2 * np.pi * f * t + phase)
    if spec.noise_sigma > 0:
        x += spec.noise_sigma * rng.standard_normal(x.shape)
    return x


def _split_sizes(n: int) -> tuple[int, int, int]:
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    return n_train, n_val, n - n_train - n_val


def generate(spec: SynthSpec) -> tuple[WindowSet, WindowSet, WindowSet]:
    """Train/val/test splits (70/15/15, stratified per class), fully seeded."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    parts: dict[str, list[tuple[np.ndarray, int]]] = {"train": [], "val": [], "test": []}
    for cls in range(spec.num_classes):
        samples = [_sample(spec, cls, rng) for _ in range(spec.count_per_class)]
        n_train, n_val, _ = _split_sizes(spec.count_per_class)
        parts["train"] += [(s, cls) for s in samples[:n_train]]
        parts["val"] += [(s, cls) for s in samples[n_train : n_train + n_val]]
        parts["test"] += [(s, cls) for s in samples[n_train + n_val :]]
    out = []
    for name in ("train", "val", "test"):
        items = parts[name]
        perm = rng.permutation(len(items))
        if items:
            data = np.stack([items[i][0] for i in perm])
            labels = np.array([items[i][1] for i in perm])
        else:
            data = np.zeros((0, spec.channels, spec.N))
            labels = np.zeros(0, dtype=np.int64)
        out.append(WindowSet(data, labels, spec.sample_rate_hz, {"split": name}))
    return out[0], out[1], out[2]
