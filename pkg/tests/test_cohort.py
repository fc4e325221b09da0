import numpy as np
import pytest

from mmcl.cohort import (CohortSpec, ModalitySpec, default_five_modality_spec,
                         generate, load_cohort, pretrain_pool, save_cohort,
                         split, subset_observations)
from mmcl.errors import ContractError
from mmcl.metrics import auroc


def _spec(n=200, seed=0, **kwargs):
    return default_five_modality_spec(n, seed=seed, **kwargs)


def _probe_auroc(features, labels, seed=0):
    """Independent linear probe: least-squares on a train half, AUROC on the
    held-out half."""
    rng = np.random.default_rng(seed)
    n = features.shape[0]
    perm = rng.permutation(n)
    half = n // 2
    tr, te = perm[:half], perm[half:]
    x_tr = np.column_stack([features[tr], np.ones(half)])
    w, *_ = np.linalg.lstsq(x_tr, labels[tr].astype(float), rcond=None)
    scores = np.column_stack([features[te], np.ones(n - half)]) @ w
    return auroc(scores, labels[te])


# --------------------------------------------------------------------------
# generation

def test_generation_bitwise_deterministic():
    a = generate(_spec(seed=3))
    b = generate(_spec(seed=3))
    np.testing.assert_array_equal(a.binary_labels, b.binary_labels)
    np.testing.assert_array_equal(a.multilabels, b.multilabels)
    np.testing.assert_array_equal(a.latents, b.latents)
    for name in a.observations:
        np.testing.assert_array_equal(a.observations[name], b.observations[name])
    for axis in a.groups:
        np.testing.assert_array_equal(a.groups[axis], b.groups[axis])


def test_different_seeds_differ():
    a = generate(_spec(seed=0))
    b = generate(_spec(seed=1))
    assert not np.array_equal(a.observations["text_a"], b.observations["text_a"])


def test_shapes_and_label_rate():
    cohort = generate(_spec(n=300))
    assert cohort.observations["text_a"].shape == (300, 12)
    assert cohort.observations["series"].shape == (300, 6, 3)
    assert cohort.multilabels.shape == (300, 25)
    assert set(np.unique(cohort.binary_labels)) <= {0, 1}
    rate = cohort.binary_labels.mean()
    assert rate == pytest.approx(0.3, abs=0.02)  # quantile threshold pins the rate
    assert set(cohort.groups) == {"gender", "ethnicity", "age"}
    assert len(cohort.groups["gender"]) == 300


def test_spec_validation():
    with pytest.raises(ContractError):
        ModalitySpec("x", "audio", 4)
    with pytest.raises(ContractError):
        ModalitySpec("x", "static_vector", 4, signal_fraction=1.5)
    with pytest.raises(ContractError):
        ModalitySpec("x", "sequence", 4, seq_len=0)
    with pytest.raises(ContractError):
        CohortSpec(10, 4, [ModalitySpec("only", "static_vector", 4)])
    mods = [ModalitySpec("a", "static_vector", 4), ModalitySpec("a", "static_vector", 4)]
    with pytest.raises(ContractError):
        CohortSpec(10, 4, mods)


# --------------------------------------------------------------------------
# planted signal

def test_zero_signal_fraction_probe_is_chance():
    spec = _spec(n=400, seed=5, signal_fractions=(0.9, 0.8, 0.7, 0.6, 0.0))
    cohort = generate(spec)
    obs = cohort.observations["series"].reshape(400, -1)
    score = _probe_auroc(obs, cohort.binary_labels)
    assert abs(score - 0.5) < 0.12


def test_high_signal_fraction_probe_beats_chance():
    cohort = generate(_spec(n=400, seed=6, signal_fractions=(0.9, 0.8, 0.7, 0.6, 0.5)))
    score = _probe_auroc(cohort.observations["text_a"], cohort.binary_labels)
    assert score > 0.8


def test_label_shuffle_destroys_probe_signal():
    cohort = generate(_spec(n=400, seed=7))
    rng = np.random.default_rng(0)
    shuffled = cohort.binary_labels.copy()
    rng.shuffle(shuffled)
    score = _probe_auroc(cohort.observations["text_a"], shuffled)
    assert abs(score - 0.5) < 0.12


def test_probe_auroc_monotone_in_signal_fraction():
    # averaged over seeds, probe quality must increase along the sf grid
    grid = (0.05, 0.3, 0.6, 0.9)
    means = []
    for sf in grid:
        vals = []
        for seed in range(3):
            cohort = generate(_spec(n=400, seed=seed,
                                    signal_fractions=(sf, 0.5, 0.5, 0.5, 0.5)))
            vals.append(_probe_auroc(cohort.observations["text_a"],
                                     cohort.binary_labels, seed=seed))
        means.append(np.mean(vals))
    assert all(a < b for a, b in zip(means, means[1:]))


# --------------------------------------------------------------------------
# splits

def test_split_disjoint_exhaustive_stratified():
    cohort = generate(_spec(n=500, seed=8))
    tr, va, te = split(cohort, (0.8, 0.1, 0.1), seed=0)
    all_idx = np.concatenate([tr, va, te])
    assert len(set(all_idx.tolist())) == 500
    assert all_idx.size == 500
    overall = cohort.binary_labels.mean()
    for part in (tr, va, te):
        assert abs(cohort.binary_labels[part].mean() - overall) < 0.05
    assert abs(tr.size - 400) <= 2 and abs(va.size - 50) <= 2 and abs(te.size - 50) <= 2


def test_split_deterministic_and_seed_sensitive():
    cohort = generate(_spec(n=200, seed=9))
    a = split(cohort, seed=4)
    b = split(cohort, seed=4)
    c = split(cohort, seed=5)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa, pb)
    assert any(not np.array_equal(pa, pc) for pa, pc in zip(a, c))


def test_split_fractions_must_sum_to_one():
    cohort = generate(_spec(n=50, seed=10))
    with pytest.raises(ContractError):
        split(cohort, (0.5, 0.4, 0.2))


def test_split_degenerate_fraction_rejected():
    cohort = generate(_spec(n=20, seed=11))
    with pytest.raises(ContractError):
        split(cohort, (0.98, 0.01, 0.01))  # 1% of 20 patients rounds to nobody


def test_pretrain_pool_disjoint_and_stratified():
    cohort = generate(_spec(n=300, seed=12))
    pool, rest = pretrain_pool(cohort, seed=0, pool_fraction=0.5)
    assert np.intersect1d(pool, rest).size == 0
    assert pool.size + rest.size == 300
    assert abs(pool.size - 150) <= 1
    overall = cohort.binary_labels.mean()
    assert abs(cohort.binary_labels[pool].mean() - overall) < 0.05
    with pytest.raises(ContractError):
        pretrain_pool(cohort, pool_fraction=1.0)


def test_subset_observations():
    cohort = generate(_spec(n=50, seed=13))
    idx = np.array([0, 5, 7])
    sub = subset_observations(cohort, idx, ["text_a", "series"])
    assert set(sub) == {"text_a", "series"}
    np.testing.assert_array_equal(sub["text_a"], cohort.observations["text_a"][idx])
    assert sub["series"].shape == (3, 6, 3)


# --------------------------------------------------------------------------
# serialization

def test_save_load_round_trip(tmp_path):
    cohort = generate(_spec(n=60, seed=14))
    path = tmp_path / "cohort.txt"
    save_cohort(cohort, path)
    loaded = load_cohort(path)
    assert loaded.spec == cohort.spec
    np.testing.assert_array_equal(loaded.binary_labels, cohort.binary_labels)
    np.testing.assert_array_equal(loaded.multilabels, cohort.multilabels)
    np.testing.assert_array_equal(loaded.latents, cohort.latents)
    for name in cohort.observations:
        np.testing.assert_array_equal(loaded.observations[name], cohort.observations[name])
    for axis in cohort.groups:
        np.testing.assert_array_equal(loaded.groups[axis], cohort.groups[axis])


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "bogus.txt"
    path.write_text("not a cohort\n")
    with pytest.raises(ContractError):
        load_cohort(path)
