"""
What the relation model sees
============================

Each ordered pair of detections becomes a short feature vector: the two
coarse classes plus ten geometric quantities. This script prints the
geometric part for related and unrelated pairs of one synthetic scene, then
shows the trained model's confidence on each.
"""

import numpy as np

from finegrain import GenConfig, gen_dataset, pair_features, train, training_examples
from finegrain.relpredict import predict_pair

data = gen_dataset(GenConfig(num_scenes=80, seed=3))
K = len(data.coarse_classes)
model = train(training_examples(data), data.relations, K)
labels = data.relations + ("none",)

# %%
# Pick the first scene with at least one relation.
scene = next(s for s in data.scenes if any(d.rel_labels for d in s.detections))
names = ["dx/W", "dy/H", "log w", "log h", "iou", "dist", "a_i", "a_j", "a_u"]
print("pair    " + " ".join(f"{n:>6s}" for n in names) + "   truth        predicted")
for i, di in enumerate(scene.detections):
    truth = dict(di.rel_labels)
    for j, dj in enumerate(scene.detections):
        if i == j:
            continue
        f = pair_features(scene, i, j, di.coarse, dj.coarse, K)
        p = predict_pair(model, f)
        t = labels[truth.get(j, len(data.relations))]
        geo = " ".join(f"{v:6.2f}" for v in f[2 * K:-1])
        print(f"{i}->{j}    {geo}   {t:<12s} {labels[int(np.argmax(p))]} ({p.max():.2f})")
