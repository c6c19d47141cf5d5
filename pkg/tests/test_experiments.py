"""Comparative experiment claims that need real training runs."""

from dataclasses import replace

import numpy as np
import pytest

from egogest import training as tr

pytestmark = pytest.mark.slow


def mean_peak(dataset, config, seeds):
    peaks = [tr.train(dataset, replace(config, seed=s)).peak_val_accuracy
             for s in seeds]
    return float(np.mean(peaks)), peaks


class TestHiddenSizeOrdering:
    def test_128_not_worse_than_16(self, small_dataset):
        seeds = tr.derive_seeds(505, 3)
        cfg = tr.TrainConfig()
        wide, _ = mean_peak(small_dataset, replace(cfg, hidden=128), seeds)
        narrow, _ = mean_peak(small_dataset, replace(cfg, hidden=16), seeds)
        assert wide >= narrow


class TestAlphaWeightSweep:
    def test_nondecreasing_within_noise_on_binary_task(self, small_dataset):
        # two-class task: Neutral vs NoddingHead, eye weight fixed at 1
        from egogest.kinematics import GestureClass

        seeds = tr.derive_seeds(606, 2)
        cfg = tr.TrainConfig(binary_class=int(GestureClass.NODDING_HEAD))
        means = []
        for alpha_w in (0.0, 0.5, 1.0, 2.0):
            m, _ = mean_peak(small_dataset, replace(cfg, alpha_w=alpha_w), seeds)
            means.append(m)
        for lo, hi in zip(means, means[1:]):
            assert hi >= lo - 0.02  # non-decreasing within run-to-run noise
