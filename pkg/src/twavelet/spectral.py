"""Power-spectrum analysis: formant detection and data-driven subband splitting.

The pipeline is ``power_spectrum -> envelope -> detect_formants -> itv_bisect
-> e_bisect``. Phase one bisects ``[0, F)`` until every band holds at most one
formant; phase two keeps bisecting bands whose energy exceeds twice the
smallest phase-one band energy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput
from .signal import FloatArray, FrequencyBand, PowerSpectrum, TimeSeriesWindow, WindowSet, power_spectrum

DEFAULT_PROMINENCE = 0.1
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Envelope:
    values: FloatArray
    smoothing_bins: int


@dataclass(frozen=True)
class FormantSet:
    formants: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        f = tuple(float(v) for v in self.formants)
        if any(b <= a for a, b in zip(f, f[1:])):
            raise InvalidInput("formants must be strictly increasing")
        object.__setattr__(self, "formants", f)

    def __len__(self) -> int:
        return len(self.formants)

    def count_in(self, band: FrequencyBand) -> int:
        return sum(1 for f in self.formants if band.contains(f))


@dataclass(frozen=True)
class SubbandSet:
    """Partition of ``[0, f_max_hz)`` into dyadic bands, with per-band energy."""

    bands: tuple[FrequencyBand, ...]
    energies: tuple[float, ...]
    f_max_hz: float
    formants_hz: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        object.__setattr__(self, "formants_hz", tuple(float(f) for f in self.formants_hz))
        if len(self.bands) != len(self.energies):
            raise InvalidInput("bands and energies differ in length")

    def __len__(self) -> int:
        return len(self.bands)

    @property
    def e_min(self) -> float:
        return min(self.energies)

    def to_json(self) -> str:
        doc = {
            "f_max_hz": self.f_max_hz,
            "bands": [
                {"f_start_hz": b.f_start_hz, "f_end_hz": b.f_end_hz, "energy": e}
                for b, e in zip(self.bands, self.energies)
            ],
            "formants_hz": list(self.formants_hz),
            "params": self.params,
        }
        if self.meta:
            doc["meta"] = self.meta
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> SubbandSet:
        try:
            doc = json.loads(text)
            bands = [FrequencyBand(float(b["f_start_hz"]), float(b["f_end_hz"])) for b in doc["bands"]]
            energies = [float(b.get("energy", 0.0)) for b in doc["bands"]]
            return cls(
                tuple(bands),
                tuple(energies),
                float(doc["f_max_hz"]),
                tuple(doc.get("formants_hz", ())),
                dict(doc.get("params", {})),
                dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"malformed subband file: {exc}") from None


def default_smoothing_bins(num_bins: int) -> int:
    k = int(round(num_bins / 32))
    if k % 2 == 0:
        k += 1
    k = max(3, k)
    if k > num_bins:
        k = num_bins if num_bins % 2 else num_bins - 1
    return max(k, 1)


def envelope(spectrum: PowerSpectrum, smoothing_bins: int | None = None) -> Envelope:
    """Centered moving average of the amplitude, mirrored at both ends."""
    amp = spectrum.amp
    if smoothing_bins is None:
        smoothing_bins = default_smoothing_bins(amp.size)
    if smoothing_bins < 1 or smoothing_bins % 2 == 0 or smoothing_bins > amp.size:
        raise InvalidInput(f"smoothing_bins must be odd and in [1, {amp.size}], got {smoothing_bins}")
    if smoothing_bins == 1:
        return Envelope(amp.copy(), 1)
    half = smoothing_bins // 2
    padded = np.pad(amp, half, mode="symmetric")
    values = np.convolve(padded, np.ones(smoothing_bins), mode="valid") / smoothing_bins
    return Envelope(values, smoothing_bins)


def _local_maxima(x: np.ndarray) -> list[int]:
    """Interior maxima; a flat top counts once, at its (lower) center bin."""
    peaks = []
    i, n = 1, x.size
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                peaks.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return peaks


def _prominence(x: np.ndarray, p: int) -> float:
    h = x[p]
    left_min = h
    i = p
    while i > 0:
        i -= 1
        if x[i] > h:
            break
        left_min = min(left_min, x[i])
    right_min = h
    i = p
    while i < x.size - 1:
        i += 1
        if x[i] > h:
            break
        right_min = min(right_min, x[i])
    return h - max(left_min, right_min)


def detect_formants(env: Envelope, bin_hz: float, prominence_frac: float = DEFAULT_PROMINENCE) -> FormantSet:
    if not 0 < prominence_frac < 1:
        raise InvalidInput("prominence_frac must lie in (0, 1)")
    x = np.asarray(env.values, dtype=np.float64)
    top = float(x.max()) if x.size else 0.0
    if top <= 0:
        return FormantSet()
    threshold = prominence_frac * top
    keep = [p for p in _local_maxima(x) if _prominence(x, p) > threshold]
    return FormantSet(tuple(p * bin_hz for p in keep))


def band_energy(spectrum: PowerSpectrum, band: FrequencyBand) -> float:
    """Left-Riemann integral of the amplitude over bins centered in the band."""
    tol = _REL_TOL * spectrum.f_max_hz
    if band.f_end_hz > spectrum.f_max_hz + tol:
        raise InvalidInput(f"band {band} exceeds spectrum range [0, {spectrum.f_max_hz:g})")
    # bin b sits at b * bin_hz; select b with f_start <= b*bin_hz < f_end
    lo = math.ceil(band.f_start_hz / spectrum.bin_hz - _REL_TOL)
    hi = math.ceil(band.f_end_hz / spectrum.bin_hz - _REL_TOL)
    lo, hi = max(lo, 0), min(hi, spectrum.num_bins)
    if hi <= lo:
        return 0.0
    return float(np.sum(spectrum.amp[lo:hi]) * spectrum.bin_hz)


def itv_bisect(band: FrequencyBand, formants: FormantSet, bands: list[FrequencyBand] | None = None) -> list[FrequencyBand]:
    """Formant-guided recursive bisection; appends the produced bands to ``bands``."""
    if bands is None:
        bands = []
    for half in band.halves():
        if formants.count_in(half) > 1 and half.mid > half.f_start_hz:
            itv_bisect(half, formants, bands)
        else:
            bands.append(half)
    return bands


def e_bisect(q: SubbandSet, spectrum: PowerSpectrum, min_bandwidth_hz: float | None = None) -> SubbandSet:
    """Energy-guided splitting with the threshold fixed from the incoming set.

    Bands with energy strictly above ``2 * E_min`` are halved recursively;
    bands already no wider than ``min_bandwidth_hz`` are kept regardless.
    """
    if len(q) == 0:
        raise InvalidInput("e_bisect needs a non-empty subband set")
    if min_bandwidth_hz is None:
        min_bandwidth_hz = 2 * spectrum.bin_hz
    if not min_bandwidth_hz > 0:
        raise InvalidInput("min_bandwidth_hz must be > 0")
    e_min = q.e_min
    limit = 2.0 * e_min
    out_bands: list[FrequencyBand] = []
    out_energy: list[float] = []
    guarded: list[FrequencyBand] = []

    def visit(band: FrequencyBand, energy: float) -> None:
        if energy > limit:
            if band.width <= min_bandwidth_hz * (1 + _REL_TOL):
                guarded.append(band)
            else:
                for half in band.halves():
                    visit(half, band_energy(spectrum, half))
                return
        out_bands.append(band)
        out_energy.append(energy)

    for band, energy in zip(q.bands, q.energies):
        visit(band, energy)
    order = sorted(range(len(out_bands)), key=lambda i: out_bands[i].f_start_hz)
    meta = dict(q.meta)
    meta.update(
        e_min=e_min,
        min_bandwidth_hz=min_bandwidth_hz,
        guard_limited_bands=[[b.f_start_hz, b.f_end_hz] for b in sorted(guarded, key=lambda b: b.f_start_hz)],
    )
    return SubbandSet(
        tuple(out_bands[i] for i in order),
        tuple(out_energy[i] for i in order),
        q.f_max_hz,
        q.formants_hz,
        dict(q.params),
        meta,
    )


def phase_one(spectrum: PowerSpectrum, formants: FormantSet) -> SubbandSet:
    bands = itv_bisect(FrequencyBand(0.0, spectrum.f_max_hz), formants)
    bands.sort(key=lambda b: b.f_start_hz)
    energies = [band_energy(spectrum, b) for b in bands]
    return SubbandSet(tuple(bands), tuple(energies), spectrum.f_max_hz, formants.formants)


def analyze_spectrum(
    spectrum: PowerSpectrum,
    smoothing_bins: int | None = None,
    prominence_frac: float = DEFAULT_PROMINENCE,
    min_bandwidth_hz: float | None = None,
) -> tuple[SubbandSet, Envelope]:
    env = envelope(spectrum, smoothing_bins)
    formants = detect_formants(env, spectrum.bin_hz, prominence_frac)
    if min_bandwidth_hz is None:
        min_bandwidth_hz = 2 * spectrum.bin_hz
    q = e_bisect(phase_one(spectrum, formants), spectrum, min_bandwidth_hz)
    params = {
        "smoothing_bins": env.smoothing_bins,
        "prominence_frac": prominence_frac,
        "min_bandwidth_hz": min_bandwidth_hz,
        "bin_hz": spectrum.bin_hz,
    }
    return SubbandSet(q.bands, q.energies, q.f_max_hz, q.formants_hz, params, q.meta), env


def analyze(
    windows: Sequence[TimeSeriesWindow] | WindowSet,
    smoothing_bins: int | None = None,
    prominence_frac: float = DEFAULT_PROMINENCE,
    min_bandwidth_hz: float | None = None,
) -> SubbandSet:
    """Run the full two-phase subband analysis over a set of windows."""
    q, _ = analyze_spectrum(power_spectrum(windows), smoothing_bins, prominence_frac, min_bandwidth_hz)
    return q


def dyadic_index(band: FrequencyBand, f_max_hz: float, max_depth: int = 48) -> tuple[int, int] | None:
    """Return (depth, k) with band == [F k / 2^depth, F (k+1) / 2^depth), or None."""
    ratio = f_max_hz / band.width
    depth = int(round(math.log2(ratio))) if ratio >= 1 - _REL_TOL else -1
    if depth < 0 or depth > max_depth or not math.isclose(2.0**depth, ratio, rel_tol=1e-9):
        return None
    k = band.f_start_hz * 2**depth / f_max_hz
    k_int = int(round(k))
    if abs(k - k_int) > 1e-6 or k_int < 0 or k_int >= 2**depth:
        return None
    return depth, k_int


def partition_errors(bands: Sequence[FrequencyBand], f_max_hz: float) -> list[str]:
    """Reasons why ``bands`` fail to be a dyadic partition of ``[0, f_max_hz)``."""
    problems = []
    if not bands:
        return ["no bands"]
    for b in bands:
        if dyadic_index(b, f_max_hz) is None:
            problems.append(f"band {b} is not dyadic in [0, {f_max_hz:g})")
    ordered = sorted(bands, key=lambda b: b.f_start_hz)
    tol = _REL_TOL * f_max_hz
    cursor = 0.0
    for b in ordered:
        if b.f_start_hz < cursor - tol:
            problems.append(f"not a partition: band {b} overlaps its predecessor")
        elif b.f_start_hz > cursor + tol:
            problems.append(f"not a partition: gap [{cursor:g}, {b.f_start_hz:g})")
        cursor = max(cursor, b.f_end_hz)
    if abs(cursor - f_max_hz) > tol:
        problems.append(f"not a partition: coverage ends at {cursor:g}, expected {f_max_hz:g}")
    return problems
