"""Regenerates the end-to-end fixture: clustered nonnegative activations,
an affine three-class head and labels with a few deliberate flips."""

from pathlib import Path
import json

import numpy as np

out = Path(__file__).parent / "e2e"
out.mkdir(exist_ok=True)
rng = np.random.default_rng(7)

centers = rng.uniform(0.0, 3.0, size=(4, 8))
member = np.repeat(np.arange(4), 15)
activations = np.maximum(centers[member] + 0.3 * rng.standard_normal((60, 8)), 0.0)
weights = rng.standard_normal((8, 3))
bias = np.array([0.5, -0.25, 0.0])

labels = np.argmax(activations @ weights + bias, axis=1)
flip = rng.choice(60, size=6, replace=False)
labels[flip] = (labels[flip] + 1) % 3

np.save(out / "A.npy", activations)
np.save(out / "W.npy", weights)
np.save(out / "b.npy", bias)
np.save(out / "labels.npy", labels.astype(np.int64))
(out / "head.json").write_text(json.dumps({"type": "affine", "W": "W.npy", "b": "b.npy", "target": 0}) + "\n")
