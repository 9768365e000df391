import json
import math

import numpy as np
import pytest

from finegrain.annotate import training_examples
from finegrain.kb import kb_query
from finegrain.relpredict import TrainConfig, accuracy, train
from finegrain.scene import center_distance, dumps_dataset, iou, parse_dataset
from finegrain.synthgen import (
    COARSE_CLASSES, GenConfig, GenConfigError, gen_dataset, gen_scene, scene_rng,
)

PATTERNS = {("lamp", "table"), ("table", "sofacouch"), ("table", "chair")}


def _coarse_name(d, det):
    return d.coarse_classes[det.coarse]


class TestScene:
    def test_zero_temperature_one_hot(self):
        s = gen_scene(GenConfig(temperature=0.0), scene_rng(3, 0))
        for det in s.detections:
            assert sorted(det.coarse_probs) == [0.0] * (len(COARSE_CLASSES) - 1) + [1.0]

    def test_probabilities_and_scores(self, synth200):
        for s in synth200.scenes:
            for det in s.detections:
                assert abs(sum(det.coarse_probs) - 1.0) <= 1e-9
                assert 0.7 <= det.score <= 1.0
                assert synth200.coarse_of_fine[det.fine_label] == det.coarse

    def test_boxes_inside_image(self, synth200):
        for s in synth200.scenes:
            for det in s.detections:
                b = det.box
                assert 0 <= b.x_min and b.x_max <= s.width and 0 <= b.y_min and b.y_max <= s.height

    def test_relations_follow_kb_and_tau(self, synth200, kb):
        tau = GenConfig().tau
        for s in synth200.scenes:
            for det in s.detections:
                for j, r in det.rel_labels:
                    obj = s.detections[j]
                    assert (det.fine_label, det.coarse, obj.coarse, r) in kb.tuples
                    assert center_distance(det.box, obj.box) <= tau

    def test_separation_margin(self, synth200):
        """Related pairs sit inside 0.9 tau; other pattern pairs beyond 1.1 tau, up to jitter."""
        cfg = GenConfig()
        slack = 2 * 3 * math.sqrt(2) * cfg.jitter_std
        for s in synth200.scenes:
            rel = {(i, j) for i, det in enumerate(s.detections) for j, _ in det.rel_labels}
            for i, a in enumerate(s.detections):
                for j, b in enumerate(s.detections):
                    if i == j:
                        continue
                    dist = center_distance(a.box, b.box)
                    if (i, j) in rel:
                        assert dist <= 0.9 * cfg.tau + slack
                    elif (i, j) not in rel and (j, i) not in rel and \
                            (_coarse_name(synth200, a), _coarse_name(synth200, b)) in PATTERNS:
                        assert dist >= 1.1 * cfg.tau - slack

    def test_same_class_overlap_bounded(self, synth200):
        for s in synth200.scenes:
            for i, a in enumerate(s.detections):
                for b in s.detections[i + 1:]:
                    if a.coarse == b.coarse:
                        assert iou(a.box, b.box) <= 0.35

    def test_label_consistency(self, synth200, kb):
        """kb_query over ground-truth relations gives back every generated fine label."""
        for s in synth200.scenes:
            for det in s.detections:
                nbrs = [(s.detections[j].coarse, r, 1.0) for j, r in det.rel_labels]
                assert kb_query(kb, det.coarse, nbrs) == (det.fine_label, 1.0)

    def test_every_relation_occurs(self, synth200):
        seen = {r for s in synth200.scenes for det in s.detections for _, r in det.rel_labels}
        assert seen == set(range(len(synth200.relations)))

    def test_pairs_linearly_separable(self):
        d = gen_dataset(GenConfig(num_scenes=60, seed=8))
        ex = training_examples(d)
        m = train(ex, d.relations, len(d.coarse_classes), TrainConfig(iters=20000, learning_rate=2.0, l2=0.0))
        assert accuracy(m, ex) == 1.0


class TestDataset:
    def test_deterministic(self):
        cfg = GenConfig(num_scenes=15, seed=11)
        assert dumps_dataset(gen_dataset(cfg)) == dumps_dataset(gen_dataset(cfg))

    def test_seeds_differ(self):
        a = gen_dataset(GenConfig(num_scenes=5, seed=4))
        b = gen_dataset(GenConfig(num_scenes=5, seed=5))
        assert [s.detections for s in a.scenes] != [s.detections for s in b.scenes]

    def test_counter_based_streams(self):
        cfg = GenConfig(num_scenes=6, seed=2)
        d = gen_dataset(cfg)
        assert gen_scene(cfg, scene_rng(2, 4), "s2-00004") == d.scenes[4]

    def test_empty(self):
        text = dumps_dataset(gen_dataset(GenConfig(num_scenes=0)))
        assert text.count(b"\n") == 1 and parse_dataset(text).scenes == ()

    def test_default_200_round_trips(self, synth200):
        assert len(synth200.scenes) == 200
        assert dumps_dataset(parse_dataset(dumps_dataset(synth200))) == dumps_dataset(synth200)
        assert synth200.scenes[7].image_id == "s42-00007"


class TestConfig:
    def test_tau(self):
        assert GenConfig().tau == pytest.approx(312.5)

    def test_json_round_trip(self):
        cfg = GenConfig(num_scenes=3, seed=9, jitter_std=1.0)
        assert GenConfig.from_json(cfg.to_json()) == cfg

    def test_overrides(self):
        cfg = GenConfig.from_json(json.dumps({"num_scenes": 4, "seed": 1}), seed=6, num_scenes=None)
        assert (cfg.num_scenes, cfg.seed) == (4, 6)
        assert GenConfig.from_json("") == GenConfig()

    @pytest.mark.parametrize("bad", [
        {"num_scenes": -1},
        {"width": 0},
        {"separation_margin": 1.5},
        {"groups": [0, 2]},
        {"temperature": -1},
        {"score_range": [0.5, 1.2]},
        {"jitter_std": 50.0},
        {"sizes": {"chair": [[10, 5], [1, 2]]}},
        {"bogus": 1},
    ])
    def test_invalid(self, bad):
        with pytest.raises(GenConfigError):
            GenConfig.from_json(json.dumps(bad))

    def test_unknown_group(self):
        with pytest.raises(GenConfigError):
            gen_scene(GenConfig(group_weights={"sofa_set": 0.5, "bookshelf": 0.5}, groups=(3, 3)),
                      np.random.default_rng(0))
