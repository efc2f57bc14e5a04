"""Loss values on a synthetic scene and a finite-difference spot check.

Run: python3 demos/04_losses.py
"""

import numpy as np

from mostdet.gradcheck import run_gradcheck
from mostdet.labelgen import generate_maps
from mostdet.losses import total_loss
from mostdet.pipeline import PredictionMaps, random_scene

rng = np.random.default_rng(0)
scene = random_scene(rng, (256, 256), n_instances=(3, 5))
labels = generate_maps(scene, (256, 256), 4)

perfect = PredictionMaps.from_labels(labels)
print(f"perfect prediction: total {total_loss(perfect, labels).value:.2e} (BCE clamp only)")

pos = labels.positives
for scale in (0.9, 0.7, 0.5):
    geo = labels.geometry.copy()
    geo[pos, :4] *= scale
    preds = PredictionMaps(labels.score.astype(float), geo, labels.possens, None, 4)
    r = total_loss(preds, labels)
    print(f"distances x{scale}: total {r.value:.4f}")

for res in run_gradcheck(n_points=30, seed=1):
    print(f"  {res.name:<13} max relative error {res.max_rel_err:.1e}")
