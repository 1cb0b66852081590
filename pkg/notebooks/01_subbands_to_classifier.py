# %% [markdown]
# # From spectrum to classifier
#
# Three synthetic classes differ only in their carrier frequency (4, 12 and
# 24 Hz, plus noise). We look at the averaged spectrum, let the band selection
# choose a partition, build the gate tree from it, and train the network.

# %%
import numpy as np

from twavelet.signal import power_spectrum
from twavelet.spectral import analyze_spectrum
from twavelet.synth import SynthSpec, generate
from twavelet.training import TrainConfig, evaluate, fit
from twavelet.tree import build_tree, degenerate_tree

spec = SynthSpec()
train, val, test = generate(spec)
print(f"{len(train)} train / {len(val)} val / {len(test)} test windows, shape {train.data.shape[1:]}")

# %% [markdown]
# ## Spectrum, envelope and formants
#
# The envelope is a centered moving average of the amplitude spectrum.
# Formants are its prominent local maxima.

# %%
ps = power_spectrum(train)
q, env = analyze_spectrum(ps)
freqs = np.arange(ps.amp.size) * ps.bin_hz
top = np.argsort(env.values)[::-1][:6]
for k in sorted(top):
    print(f"{freqs[k]:5.1f} Hz  amp {ps.amp[k]:.3f}  envelope {env.values[k]:.3f}")
print("formants (Hz):", q.formants_hz)

# %% [markdown]
# ## Band selection and the gate tree
#
# Phase one bisects until every band holds at most one formant. Phase two
# keeps splitting bands whose energy exceeds twice the smallest band energy.

# %%
for band, e in zip(q.bands, q.energies):
    print(f"{str(band):>10}  energy {e:8.3f}")
tree = build_tree(q)
print(f"height {tree.height}, {tree.unit_count} lifting units")
print("leaves:", ", ".join(str(b) for b in tree.leaf_order))

# %% [markdown]
# ## Training
#
# The learning rate is raised from the 3e-4 default so that a short run
# converges. The single-leaf tree keeps the same heads but does no
# decomposition, which gives a baseline.

# %%
cfg = TrainConfig(lr=3e-3, max_epochs=20)
ckpt, history = fit(train, val, tree, cfg)
for row in history[::5]:
    print(f"epoch {row['epoch']:3d}  loss {row['train_loss']:.4f}  val_acc {row['val_acc']:.3f}")
print("INN test accuracy:", evaluate(ckpt.build_model(), test).accuracy)

base, _ = fit(train, val, degenerate_tree(q.f_max_hz), cfg)
print("single-leaf baseline:", evaluate(base.build_model(), test).accuracy)
