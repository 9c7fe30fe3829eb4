"""Data generation, partitioning, and CSV round-trip behavior."""

import numpy as np
import pytest

from densemble.datasets import (
    LocalDataset,
    PartitionSpec,
    PartyRule,
    generate_toy,
    partition,
    read_csv,
    split_train_test,
    toy_blob_means,
    write_csv,
)


def test_generate_toy_empty():
    ds = generate_toy(0, 0, 5)
    assert len(ds) == 0
    assert ds.label_space == ()
    assert ds.num_classes == 5


def test_generate_toy_balanced_counts():
    ds = generate_toy(0, 2000, 5)
    assert len(ds) == 2000
    assert ds.features.shape == (2000, 2)
    counts = ds.class_counts()
    assert counts == {k: 400 for k in range(5)}


def test_generate_toy_uneven_n_balanced_within_one():
    ds = generate_toy(3, 2003, 5)
    counts = list(ds.class_counts().values())
    assert max(counts) - min(counts) <= 1
    assert sum(counts) == 2003


def test_generate_toy_deterministic():
    a = generate_toy(42, 300, 5)
    b = generate_toy(42, 300, 5)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    c = generate_toy(43, 300, 5)
    assert not np.array_equal(a.features, c.features)


def test_generate_toy_blob_sample_means_near_generator_means():
    # 20 draws per blob; sample mean of an isotropic Gaussian stays within
    # 3*sigma/sqrt(20) of the true mean per coordinate with high margin
    ds = generate_toy(7, 100, 5)
    means = toy_blob_means(5)
    tol = 3.0 * 0.8 / np.sqrt(20.0)
    for k in range(5):
        blob = ds.features[ds.labels == k]
        assert len(blob) == 20
        assert np.all(np.abs(blob.mean(axis=0) - means[k]) < tol)


def test_toy_blob_means_overlap_pair_distance():
    means = toy_blob_means(5)
    assert np.isclose(np.linalg.norm(means[1] - means[2]), 3.2)
    # the non-overlapping adjacent pairs keep the base circle chord
    chord = 2.0 * 4.0 * np.sin(np.pi / 5.0)
    assert np.isclose(np.linalg.norm(means[3] - means[4]), chord)


def test_generate_toy_validation():
    with pytest.raises(ValueError):
        generate_toy(0, -1, 5)
    with pytest.raises(ValueError):
        generate_toy(0, 10, 0)


def test_split_equal_halves():
    ds = generate_toy(0, 2000, 5)
    train, test = split_train_test(ds, 0.5, 0)
    assert len(train) == 1000 and len(test) == 1000


def test_split_deterministic_and_disjoint():
    ds = generate_toy(1, 400, 5)
    a_train, a_test = split_train_test(ds, 0.5, 9)
    b_train, b_test = split_train_test(ds, 0.5, 9)
    assert np.array_equal(a_train.features, b_train.features)
    assert np.array_equal(a_test.features, b_test.features)
    merged = np.concatenate([a_train.features, a_test.features])
    assert merged.shape[0] == len(ds)
    # every original row appears exactly once across the two halves
    orig = {tuple(row) for row in ds.features}
    assert {tuple(row) for row in merged} == orig


def test_split_stratified_counts():
    ds = generate_toy(2, 100, 5)
    train, test = split_train_test(ds, 0.8, 0)
    for k in range(5):
        assert np.sum(train.labels == k) == 16
        assert np.sum(test.labels == k) == 4


def test_split_ratio_validation():
    ds = generate_toy(0, 100, 5)
    for ratio in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            split_train_test(ds, ratio, 0)


def test_split_tiny_class_rejected():
    ds = LocalDataset(np.zeros((1, 2)), np.array([0]), (0,), 1)
    with pytest.raises(ValueError):
        split_train_test(ds, 0.5, 0)


def test_partition_shared_class_shards():
    ds = generate_toy(0, 1000, 5)
    spec = PartitionSpec(
        parties=[
            PartyRule((0, 1), 1.0),
            PartyRule((2, 3), 0.5),
            PartyRule((3, 4), 0.5),
        ],
        seed=0,
    )
    shards = partition(ds, spec)
    assert len(shards) == 3
    assert shards[0].label_space == (0, 1)
    assert shards[1].label_space == (2, 3)
    assert shards[2].label_space == (3, 4)
    # the shared class is split between its two claimants without loss
    n3 = np.sum(ds.labels == 3)
    assert np.sum(shards[1].labels == 3) + np.sum(shards[2].labels == 3) == n3
    for shard in shards:
        assert shard.num_classes == 5


def test_partition_identity():
    ds = generate_toy(5, 200, 4)
    spec = PartitionSpec(parties=[PartyRule((0, 1, 2, 3), 1.0)], seed=1)
    (shard,) = partition(ds, spec)
    assert len(shard) == len(ds)
    assert {tuple(r) for r in shard.features} == {tuple(r) for r in ds.features}


def test_partition_class_count_conservation():
    ds = generate_toy(0, 500, 5)
    spec = PartitionSpec(
        parties=[PartyRule((0, 1, 2), 0.5), PartyRule((2, 3, 4), 0.5)], seed=0
    )
    shards = partition(ds, spec)
    n2 = np.sum(ds.labels == 2)
    assert np.sum(shards[0].labels == 2) + np.sum(shards[1].labels == 2) == n2


def test_partition_no_duplication():
    ds = generate_toy(4, 600, 5)
    spec = PartitionSpec(
        parties=[PartyRule((0, 1, 2), 0.5), PartyRule((2, 3, 4), 0.5)], seed=3
    )
    shards = partition(ds, spec)
    rows = [tuple(r) for shard in shards for r in shard.features]
    assert len(rows) == len(set(rows))
    assert set(rows).issubset({tuple(r) for r in ds.features})


def test_partition_deterministic():
    ds = generate_toy(0, 400, 5)
    spec = PartitionSpec(parties=[PartyRule((0, 1, 2), 0.5), PartyRule((2, 3, 4), 0.5)], seed=11)
    a = partition(ds, spec)
    b = partition(ds, spec)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.features, sb.features)


def test_partition_uncovered_class_rejected():
    ds = generate_toy(0, 100, 5)
    spec = PartitionSpec(parties=[PartyRule((0, 1), 1.0), PartyRule((2, 3), 1.0)], seed=0)
    with pytest.raises(ValueError, match="not assigned"):
        partition(ds, spec)


def test_partition_overallocated_class_rejected():
    with pytest.raises(ValueError, match="exceed"):
        PartitionSpec(parties=[PartyRule((0, 1), 1.0), PartyRule((1, 2), 0.7)], seed=0)


def test_partition_spec_fraction_bounds():
    for frac in (0.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            PartitionSpec(parties=[PartyRule((0,), frac)], seed=0)


def test_partition_spec_json_round_trip(tmp_path):
    spec = PartitionSpec(
        parties=[PartyRule((0, 1), 1.0), PartyRule((2, 3), 0.5), PartyRule((3, 4), 0.5)],
        seed=17,
    )
    path = tmp_path / "spec.json"
    spec.save(path)
    loaded = PartitionSpec.load(path)
    assert loaded.seed == 17
    assert [r.classes for r in loaded.parties] == [r.classes for r in spec.parties]
    assert [r.fraction for r in loaded.parties] == [r.fraction for r in spec.parties]


def test_csv_round_trip_bitwise(tmp_path):
    ds = generate_toy(0, 150, 5)
    path = tmp_path / "data.csv"
    write_csv(ds, path)
    back = read_csv(path, num_classes=5)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.num_classes == 5


def test_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("f0,f1,label\n")
    ds = read_csv(path)
    assert len(ds) == 0


def test_csv_non_numeric_feature_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1.0,2.0,0\nx,2.0,1\n")
    with pytest.raises(ValueError, match="line 3"):
        read_csv(path)


def test_csv_wrong_field_count_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1.0,2.0,0\n1.0,0\n")
    with pytest.raises(ValueError, match="line 3"):
        read_csv(path)


def test_csv_bad_label_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1.0,2.0,zero\n")
    with pytest.raises(ValueError, match="line 2"):
        read_csv(path)


def test_csv_bad_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,0\n")
    with pytest.raises(ValueError, match="line 1"):
        read_csv(path)


def test_dataset_validation():
    with pytest.raises(ValueError, match="finite"):
        LocalDataset(np.array([[np.nan, 0.0]]), np.array([0]), (0,), 1)
    with pytest.raises(ValueError, match="label"):
        LocalDataset(np.zeros((1, 2)), np.array([3]), (0, 1), 5)
    with pytest.raises(ValueError, match="mismatch"):
        LocalDataset(np.zeros((2, 2)), np.array([0]), (0,), 1)


def test_dataset_arrays_are_read_only():
    ds = generate_toy(0, 10, 2)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(ValueError):
        ds.labels[0] = 1
