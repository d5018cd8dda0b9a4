import numpy as np
import pytest

from dcpl.errors import ArgumentError
from dcpl.losses import HyperParams
from dcpl.model import ModelParams, accuracy, predict_labels
from dcpl.pseudolabel import assign_pseudo_labels, compute_centroids
from dcpl.synthbench import (
    SynthConfig,
    generate_pair,
    oracle_transition,
    source_hyperparams,
    source_loss,
    train_source_head,
)


def _acc(head, ds):
    return accuracy(predict_labels(head, ds.features_f), ds.true_labels)


def _pl_accuracy(cfg):
    source, target = generate_pair(cfg)
    head = train_source_head(source, source_hyperparams(seed=cfg.seed))
    return float(np.mean(assign_pseudo_labels(target, compute_centroids(target, head)) == target.true_labels))


def test_same_config_same_datasets():
    a = generate_pair(SynthConfig(n_source=100, n_target=100, seed=5))
    b = generate_pair(SynthConfig(n_source=100, n_target=100, seed=5))
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    c = generate_pair(SynthConfig(n_source=100, n_target=100, seed=6))
    assert not c[1].equals(a[1])


@pytest.mark.parametrize("n,k", [(100, 5), (103, 5), (7, 3)])
def test_balanced_class_counts(n, k):
    source, target = generate_pair(SynthConfig(k=k, n_source=n, n_target=n, seed=1))
    for ds in (source, target):
        counts = np.bincount(ds.true_labels, minlength=k)
        assert set(counts.tolist()) <= {n // k, -(-n // k)}


def test_outputs_validate_and_carry_projection():
    source, target = generate_pair(SynthConfig(n_source=50, n_target=60, seed=2))
    source.validate()
    target.validate()
    assert target.n == 60 and target.d_p == 16
    assert np.array_equal(source.projection, target.projection)


def test_zero_shift_transfers():
    cfg = SynthConfig(shift_translation=0.0, shift_rotation=0.0, seed=4)
    source, target = generate_pair(cfg)
    head = train_source_head(source, source_hyperparams(seed=4))
    assert abs(_acc(head, source) - _acc(head, target)) <= 0.02


def test_separable_source_is_learned():
    cfg = SynthConfig(class_separation=6.0, n_source=1000, n_target=10, seed=8)
    source, _ = generate_pair(cfg)
    head = train_source_head(source, source_hyperparams(seed=8))
    assert _acc(head, source) >= 0.99


def test_zero_learning_rate_returns_init():
    source, _ = generate_pair(SynthConfig(n_source=50, n_target=10))
    head = train_source_head(source, source_hyperparams(lr=0.0, epochs=1))
    assert head.equals(ModelParams.zeros(source.k, source.d_f))


def test_source_training_deterministic_and_reduces_loss():
    source, _ = generate_pair(SynthConfig(n_source=300, n_target=10, seed=3))
    hp = source_hyperparams(seed=3)
    a = train_source_head(source, hp)
    assert a.equals(train_source_head(source, hp))
    assert source_loss(a, source) < source_loss(ModelParams.zeros(source.k, source.d_f), source)


def test_source_training_needs_labels():
    from dataclasses import replace
    source, _ = generate_pair(SynthConfig(n_source=20, n_target=10))
    with pytest.raises(ArgumentError):
        train_source_head(replace(source, true_labels=None), HyperParams())


def test_oracle_needs_both_label_sets():
    _, target = generate_pair(SynthConfig(n_source=20, n_target=20))
    with pytest.raises(ArgumentError):
        oracle_transition(target)
    labelled = target.with_pseudo_labels(target.true_labels)
    np.testing.assert_array_equal(oracle_transition(labelled), np.eye(target.k))


@pytest.mark.parametrize("bad", [dict(k=1), dict(d_f=1), dict(n_target=0), dict(class_separation=-1.0),
                                 dict(label_noise_target="symmetric")])
def test_invalid_configs(bad):
    with pytest.raises(ArgumentError):
        generate_pair(SynthConfig(**bad))


def test_default_profile_pseudo_label_accuracy_band():
    for seed in (2019, 2020, 2021):
        assert 0.65 <= _pl_accuracy(SynthConfig(seed=seed)) <= 0.75


def test_translation_monotone_on_average():
    seeds = range(5)
    shifts = [0.0, 0.5, 1.0, 1.5]
    means = [np.mean([_pl_accuracy(SynthConfig(n_source=600, n_target=600, shift_translation=s, seed=sd))
                      for sd in seeds]) for s in shifts]
    inversions = sum(b > a for a, b in zip(means, means[1:]))
    assert inversions <= 1, means
