"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from oracles import central_difference, direct_dft, dyadic_partitions, relative_error, trie_tree
from twavelet.autodiff import Tensor
from twavelet.cli import main
from twavelet.lifting import Mode, decompose, make_units, reconstruct
from twavelet.model import TWaveNet
from twavelet.nn import FusionHead, attention_fuse, attention_weights
from twavelet.signal import FrequencyBand, PowerSpectrum, fft
from twavelet.spectral import (
    FormantSet,
    SubbandSet,
    analyze_spectrum,
    band_energy,
    e_bisect,
    partition_errors,
    phase_one,
)
from twavelet.synth import SynthSpec, generate
from twavelet.training import TrainConfig, fit, loss, regularizer, report_from_predictions, write_log_csv
from twavelet.tree import build_tree, degenerate_tree, subbands_of

RESULTS: list[str] = []


def report(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def B(a, b):
    return FrequencyBand(float(a), float(b))


def keys_to_q(keys, f_max=32.0):
    bands = []
    for d, k in sorted(keys, key=lambda dk: dk[1] / 2 ** dk[0]):
        w = f_max / 2**d
        bands.append(B(k * w, (k + 1) * w))
    return SubbandSet(tuple(bands), tuple(1.0 for _ in bands), f_max)


def randomize_units(units, rng, scale=0.3):
    for u in units.values():
        for sub in (u.phi, u.psi, u.rho, u.eta):
            sub.conv2.weight.data[:] = scale * rng.standard_normal(sub.conv2.weight.shape)
            sub.conv2.bias.data[:] = scale * rng.standard_normal(sub.conv2.bias.shape)
        u.eval()
    return units


def test_c1_invertibility():
    rng = np.random.default_rng(1)
    partitions = list(dyadic_partitions(3))
    t0 = time.perf_counter()
    worst_inn = worst_haar = 0.0
    for i in range(1000):
        tree = build_tree(keys_to_q(partitions[rng.integers(len(partitions))]))
        C = int(rng.integers(1, 5))
        N = int(2 ** rng.integers(max(tree.height, 1), 9))
        units = randomize_units(make_units(tree, C, Mode.INN, seed=i), rng)
        x = rng.standard_normal((C, N)).astype(np.float32)
        worst_inn = max(worst_inn, float(np.max(np.abs(reconstruct(decompose(x, tree, units), tree, units) - x))))
        haar = make_units(tree, C, Mode.HAAR)
        xd = rng.standard_normal((C, N))
        worst_haar = max(worst_haar, float(np.max(np.abs(reconstruct(decompose(xd, tree, haar), tree, haar) - xd))))
    elapsed = time.perf_counter() - t0
    ok = worst_inn < 1e-5 and worst_haar < 1e-10 and elapsed < 30
    report(1, "invertibility", ok, f"INN max err {worst_inn:.2e} < 1e-5, HAAR {worst_haar:.2e} < 1e-10, {elapsed:.1f}s < 30s")


def test_c2_fft_oracle():
    rng = np.random.default_rng(2)
    worst = 0.0
    for log_n in range(3, 11):
        x = rng.standard_normal(2**log_n)
        worst = max(worst, float(np.max(np.abs(fft(x) - direct_dft(x)))))
    report(2, "FFT vs direct DFT", worst < 1e-9, f"max abs err {worst:.2e} < 1e-9 for N=8..1024")


def _random_spectrum(rng):
    n_bins = int(2 ** rng.integers(4, 9))
    bin_hz = float(rng.uniform(0.1, 2.0))
    freqs = np.arange(n_bins)
    amp = rng.uniform(0.01, 0.5, n_bins)
    for _ in range(rng.integers(0, 6)):
        c, w, h = rng.uniform(0, n_bins), rng.uniform(0.5, 5), rng.uniform(0.5, 20)
        amp += h * np.exp(-0.5 * ((freqs - c) / w) ** 2)
    return PowerSpectrum(amp, bin_hz, n_bins * bin_hz)


def test_c3_band_selection():
    rng = np.random.default_rng(3)
    failures = []
    for i in range(200):
        ps = _random_spectrum(rng)
        k = int(rng.choice([1, 3, 5]))
        q, _ = analyze_spectrum(ps, k, float(rng.uniform(0.02, 0.5)))
        problems = partition_errors(q.bands, ps.f_max_hz)
        if any(sum(b.contains(f) for f in q.formants_hz) > 1 for b in q.bands):
            problems.append("band with two formants")
        limit, guard = 2 * q.meta["e_min"], q.params["min_bandwidth_hz"]
        # width equal to the guard up to endpoint round-off counts as at the guard
        if any(e > limit and b.width > guard * (1 + 1e-9) for b, e in zip(q.bands, q.energies)):
            problems.append("energy above 2 E_min in a splittable band")
        if problems:
            failures.append((i, problems))

    flat = PowerSpectrum(np.ones(32), 1.0, 32.0)
    traced = phase_one(flat, FormantSet((5.0, 12.0))).bands == (B(0, 8), B(8, 16), B(16, 32))
    e = 0.25
    ps = PowerSpectrum(np.r_[np.full(16, 4 * e), np.full(16, e)], 1.0, 32.0)
    q = SubbandSet((B(0, 16), B(16, 32)), tuple(band_energy(ps, b) for b in (B(0, 16), B(16, 32))), 32.0)
    out = e_bisect(q, ps, 2.0)
    uniform = out.bands == (B(0, 8), B(8, 16), B(16, 32)) and out.energies == (8 * e * 4, 8 * e * 4, 16 * e)
    ok = not failures and traced and uniform
    report(3, "band selection postconditions", ok, f"{200 - len(failures)}/200 random spectra ok, P={{5,12}} trace {traced}, uniform-density trace {uniform}")


def _shape(node):
    return {"key": (node.depth, node.index), "gate": node.gate, "children": [_shape(c) for c in node.children] if node.children else []}


def test_c4_tree_oracle():
    partitions = list(dyadic_partitions(4))
    mismatches = idem = 0
    for keys in partitions:
        t = build_tree(keys_to_q(keys))
        mismatches += _shape(t.root) != trie_tree(keys)
        idem += build_tree(subbands_of(t)) != t
    ok = len(partitions) == 677 and mismatches == 0 and idem == 0
    report(4, "tree vs trie oracle", ok, f"{len(partitions)} partitions, {mismatches} oracle mismatches, {idem} idempotence failures")


def test_c5_gradients():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    tree = build_tree(keys_to_q([(2, 0), (2, 1), (1, 1)]))
    model = TWaveNet(tree, 2, 3, Mode.INN, seed=5, dropout_rate=0.0, dtype=np.float64)
    randomize_units(model.units, rng)
    model.train()  # dropout is 0; batch norm uses batch statistics
    x = Tensor(rng.standard_normal((4, 2, 32)), dtype=np.float64)
    y = np.array([0, 1, 2, 1])

    def f():
        probs, pairs = model(x)
        return float(loss(probs, y, pairs, 0.1).data)

    model.zero_grad()
    probs, pairs = model(x)
    loss(probs, y, pairs, 0.1).backward()
    components = {
        "coupling": [p for u in model.units.values() for p in u.parameters()],
        "fusion": model.fusion.parameters(),
        "classifier": model.classifier.parameters(),
    }
    worst = {}
    for name, params in components.items():
        coords = [(p, idx) for p in params for idx in np.ndindex(p.data.shape)]
        picks = rng.choice(len(coords), size=20, replace=False)
        errs = []
        for j in picks:
            p, idx = coords[j]
            num = central_difference(f, p.data, idx, 1e-6)
            errs.append(relative_error(num, p.grad[idx], floor=1e-6))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-3 for v in worst.values()) and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(5, "composed gradients", ok, f"worst rel err over 20 coords each: {detail}; {elapsed:.1f}s < 120s")


def test_c6_attention_and_metrics():
    rng = np.random.default_rng(6)
    col_err = 0.0
    for m in range(1, 8):
        a = attention_weights(Tensor(rng.standard_normal((32, m))), Tensor(rng.standard_normal((32, m)))).data
        col_err = max(col_err, float(np.max(np.abs(a.sum(axis=0) - 1))))
    head = FusionHead(3, rng=rng, dtype=np.float64)
    h = Tensor(rng.standard_normal((3, 1)), dtype=np.float64)
    _, _, v = head.project(h)
    single = np.array_equal(attention_fuse(h, head).data, v.data.T)
    r = report_from_predictions([0, 1, 1], [0, 1, 0])
    hand = r.accuracy == r.f_macro == r.f_weighted == pytest.approx(2 / 3, abs=1e-15)
    bal = 0.0
    for _ in range(100):
        labels = np.repeat(np.arange(4), 5)
        rb = report_from_predictions(rng.integers(0, 4, 20), labels, 4)
        bal = max(bal, abs(rb.f_weighted - rb.f_macro))
    ok = col_err < 1e-6 and single and hand and bal <= 1e-12
    report(6, "attention and metrics algebra", ok, f"column-sum err {col_err:.1e}, m=1 H=v {single}, hand metrics {hand}, |F_w-F_m| {bal:.1e}")


def test_c7_haar_regularizer():
    rng = np.random.default_rng(7)
    tree = build_tree(keys_to_q([(3, 0), (3, 1), (2, 1), (1, 1)]))
    model = TWaveNet(tree, 3, 2, Mode.HAAR, dtype=np.float64)
    worst = 0.0
    eps = np.finfo(np.float64).eps
    for _ in range(100):
        scale = 10 ** rng.uniform(-3, 3)
        x = rng.standard_normal((4, 3, 64)) * scale + rng.normal(0, scale)
        _, pairs = model(x)
        worst = max(worst, float(np.max(regularizer(pairs).data)) / (eps * np.max(np.abs(x))))
    report(7, "HAAR regularizer identity", worst <= 64, f"max term = {worst:.1f} eps * max|x| (bound 64)")


@pytest.mark.slow
def test_c8_end_to_end(tmp_path, capsys):
    t0 = time.perf_counter()
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data)]) == 0
    assert main(["analyze", str(data), "--out", str(tmp_path / "subbands.json")]) == 0
    assert main(["build-tree", str(tmp_path / "subbands.json"), "--out", str(tmp_path / "tree.json")]) == 0
    (tmp_path / "single.json").write_text(degenerate_tree(32.0).to_json())
    (tmp_path / "cfg.json").write_text(json.dumps({"lr": 3e-3, "max_epochs": 50}))
    acc = {}
    for name, tree, flags in (
        ("inn", "tree.json", []),
        ("haar", "tree.json", ["--mode", "haar"]),
        ("single", "single.json", []),
    ):
        ckpt = tmp_path / f"{name}.ckpt"
        rc = main(["train", str(data), str(tmp_path / tree), str(tmp_path / "cfg.json"), "--out", str(ckpt), "--quiet", *flags])
        assert rc == 0
        assert main(["eval", str(ckpt), str(data)]) == 0
        acc[name] = json.loads(ckpt.with_suffix(".eval.json").read_text())["accuracy"]
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    ok = acc["inn"] >= 0.95 and acc["inn"] >= acc["single"] + 0.05 and acc["inn"] >= acc["haar"] and elapsed < 600
    report(
        8,
        "synthetic end-to-end",
        ok,
        f"INN {acc['inn']:.3f} >= 0.95, single-leaf {acc['single']:.3f}, HAAR {acc['haar']:.3f}, {elapsed:.0f}s < 600s",
    )


def test_c9_determinism(tmp_path):
    train, val, _ = generate(SynthSpec(N=64, count_per_class=30))
    tree = build_tree(keys_to_q([(2, 0), (2, 1), (1, 1)]))
    cfg = TrainConfig(batch_size=16, max_epochs=3)
    logs = []
    for name in ("a", "b"):
        _, history = fit(train, val, tree, cfg)
        write_log_csv(tmp_path / f"{name}.csv", history)
        logs.append((tmp_path / f"{name}.csv").read_bytes())
    data = tmp_path / "data"
    main(["synth", "--out", str(data)])
    outs = []
    for name in ("a", "b"):
        main(["analyze", str(data), "--out", str(tmp_path / f"{name}.json")])
        outs.append((tmp_path / f"{name}.json").read_bytes() + (tmp_path / f"{name}.spectrum.csv").read_bytes())
    ok = logs[0] == logs[1] and outs[0] == outs[1]
    report(9, "determinism", ok, f"epoch logs identical {logs[0] == logs[1]}, analyze outputs identical {outs[0] == outs[1]}")
