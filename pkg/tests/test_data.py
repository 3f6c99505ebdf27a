import numpy as np
import pytest

from homemoe.data import (DataError, Dataset, DatasetSpec, demo_tasks, generate_dataset, read_dataset,
                          split_dataset, write_dataset)
from homemoe.models import TaskSpec


def small_spec(**kw):
    base = dict(n_users=40, logs_min=10, logs_max=20, calibration_rows=20_000)
    base.update(kw)
    return DatasetSpec(**base)


def _label_corr(ds, spec):
    r = np.corrcoef(ds.labels.T)
    cats = [t.category for t in spec.tasks]
    inside, across = [], []
    for a in range(len(cats)):
        for b in range(a + 1, len(cats)):
            (inside if cats[a] == cats[b] else across).append(r[a, b])
    return np.array(inside), np.array(across)


@pytest.mark.slow
def test_rates_hit_targets_over_200k_rows():
    tasks = [TaskSpec("ctr", "interaction", 0.20), TaskSpec("follow", "interaction", 0.002),
             TaskSpec("evtr", "watch", 0.3)]
    ds = generate_dataset(DatasetSpec(tasks=tasks, n_users=2000, logs_min=100, logs_max=100))
    assert len(ds) == 200_000
    rates = ds.positive_rates()
    assert abs(rates["ctr"] - 0.20) <= 0.02
    assert abs(rates["follow"] - 0.002) <= 0.0002
    assert abs(rates["evtr"] - 0.3) <= 0.03


def test_demo_rates_within_ten_percent():
    spec = DatasetSpec(n_users=1000, logs_min=100, logs_max=100)
    ds = generate_dataset(spec)
    rates = ds.positive_rates()
    dense = max(t.positive_rate for t in spec.tasks)
    sparse = min(t.positive_rate for t in spec.tasks)
    assert dense / sparse == pytest.approx(100.0)
    for t in spec.tasks:
        assert abs(rates[t.name] - t.positive_rate) <= 0.1 * t.positive_rate, t.name


def test_zero_rho_decorrelates_categories():
    spec = DatasetSpec(rho_in=0.0, rho_cross=0.0, n_users=1000, logs_min=100, logs_max=100)
    _, across = _label_corr(generate_dataset(spec), spec)
    assert np.mean(np.abs(across)) < 0.02


def test_in_category_correlation_exceeds_cross():
    spec = DatasetSpec(rho_in=0.5, rho_cross=0.1, n_users=1000, logs_min=100, logs_max=100)
    inside, across = _label_corr(generate_dataset(spec), spec)
    assert inside.mean() > across.mean()


def test_same_seed_identical_files(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_dataset(generate_dataset(small_spec(seed=4)), a)
    write_dataset(generate_dataset(small_spec(seed=4)), b)
    assert a.read_bytes() == b.read_bytes()
    write_dataset(generate_dataset(small_spec(seed=5)), b)
    assert a.read_bytes() != b.read_bytes()


def test_user_streams_do_not_depend_on_user_count():
    # features come from per-user streams; biases (hence labels) depend on the population
    a = generate_dataset(small_spec(n_users=10))
    b = generate_dataset(small_spec(n_users=20))
    n = len(a)
    np.testing.assert_array_equal(a.features, b.features[:n])
    np.testing.assert_array_equal(a.user_ids, b.user_ids[:n])


def test_shapes_and_distractors():
    spec = small_spec(feature_width=16, latent_dim=6)
    ds = generate_dataset(spec)
    assert ds.features.shape[1] == 16
    assert ds.labels.shape[1] == len(spec.tasks)
    assert set(np.unique(ds.labels)) <= {0.0, 1.0}
    assert ds.user_ids.min() == 0 and ds.user_ids.max() == spec.n_users - 1


def test_round_trip(tmp_path):
    ds = generate_dataset(small_spec())
    write_dataset(ds, tmp_path / "d.csv")
    assert read_dataset(tmp_path / "d.csv") == ds


def test_non_binary_label_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("user_id,f_0,f_1,y_ctr\n0,0.1,0.2,1\n1,0.3,0.4,2\n")
    with pytest.raises(DataError, match="line 3"):
        read_dataset(p)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError, match="no header"):
        read_dataset(p)


@pytest.mark.parametrize("text,match", [
    ("user,f_0,y_ctr\n", "header"),
    ("user_id,f_0,y_ctr\n0,0.5\n", "line 2"),
    ("user_id,f_0,y_ctr\n0,abc,1\n", "line 2"),
    ("user_id,f_0,z\n", "unexpected column"),
])
def test_malformed_files(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        read_dataset(p)


@pytest.mark.parametrize("kw,match", [
    ({"feature_width": 4, "latent_dim": 8}, "latent_dim"),
    ({"logs_min": 5, "logs_max": 2}, "logs_min"),
    ({"rho_in": 0.8, "rho_cross": 0.4}, "rho"),
])
def test_spec_validation(kw, match):
    with pytest.raises(DataError, match=match):
        generate_dataset(small_spec(**kw))


def test_unreachable_rate_names_task():
    tasks = [TaskSpec("ctr", "interaction", 0.3), TaskSpec("rare", "watch", 1e-6)]
    with pytest.raises(DataError, match="rare"):
        generate_dataset(small_spec(tasks=tasks, calibration_rows=1000))


def test_split_is_deterministic_and_disjoint():
    ds = generate_dataset(small_spec())
    tr, ev = split_dataset(ds, 0.25, seed=1)
    tr2, ev2 = split_dataset(ds, 0.25, seed=1)
    assert tr == tr2 and ev == ev2
    assert len(tr) + len(ev) == len(ds)
    assert len(ev) == round(0.25 * len(ds))


def test_batches_drop_last():
    ds = Dataset(np.zeros((10, 2)), np.zeros((10, 1)), np.arange(10), ["t"])
    sizes = [len(b.features) for b in ds.batches(4)]
    assert sizes == [4, 4]
    sizes = [len(b.features) for b in ds.batches(4, drop_last=False)]
    assert sizes == [4, 4, 2]


def test_spec_dict_round_trip():
    spec = DatasetSpec(n_users=7)
    again = DatasetSpec.from_dict(spec.to_dict())
    assert again == spec
    assert [t.name for t in again.tasks] == [t.name for t in demo_tasks()]
