"""Synthetic multi-task click logs and the columnar dataset file format.

Generative model, per log of user u on item i with latent vectors of size k:

    x      = u * i, rescaled to norm sqrt(k)
    s_t    = a * <r_t, x> + b * <r_cat(t), x> + c * <r_all, x>
    y_t    = 1[s_t + noise * eps + bias_t > 0]

with ``a = sqrt(1 - rho_in - rho_cross)``, ``b = sqrt(rho_in)``,
``c = sqrt(rho_cross)`` and orthonormal readouts r whenever k allows it, so the
latent scores of two tasks correlate by ``rho_in + rho_cross`` inside a
category and ``rho_cross`` across. ``bias_t`` is found by bisection on a
separate calibration sample so each task hits its positive rate.

Features are a noisy random projection of ``[u, i]`` plus pure-noise
distractor columns.
"""

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import TaskSpec, check_tasks


class DataError(ValueError):
    pass


def demo_tasks():
    """Eight tasks, two categories, 100:1 dense-to-sparse skew."""
    return [
        TaskSpec("evtr", "watch", 0.30),
        TaskSpec("ltr", "watch", 0.12),
        TaskSpec("ctr", "interaction", 0.30),
        TaskSpec("like", "interaction", 0.05),
        TaskSpec("cmtr", "interaction", 0.005),
        TaskSpec("collect", "interaction", 0.004),
        TaskSpec("forward", "interaction", 0.003),
        TaskSpec("follow", "interaction", 0.003),
    ]


@dataclass
class DatasetSpec:
    tasks: list = field(default_factory=demo_tasks)
    n_users: int = 500
    logs_min: int = 50
    logs_max: int = 150
    n_items: int = 2000
    feature_width: int = 32
    latent_dim: int = 12
    rho_in: float = 0.5
    rho_cross: float = 0.1
    noise: float = 0.5
    view_noise: float = 0.3
    distractor_fraction: float = 0.25
    calibration_rows: int = 200_000
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tasks = [t if isinstance(t, TaskSpec) else TaskSpec(**t) for t in d.pop("tasks", [])] or demo_tasks()
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown dataset spec keys: {sorted(unknown)}")
        return cls(tasks=tasks, **d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        check_tasks(self.tasks)
        for t in self.tasks:
            if not 0.0 < t.positive_rate < 1.0:
                raise DataError(f"task {t.name!r}: positive rate must lie in (0, 1)")
        if self.feature_width < self.latent_dim:
            raise DataError(f"feature_width {self.feature_width} < latent_dim {self.latent_dim}")
        if not 1 <= self.logs_min <= self.logs_max:
            raise DataError("need 1 <= logs_min <= logs_max")
        if self.n_users < 1 or self.n_items < 1:
            raise DataError("n_users and n_items must be positive")
        if self.rho_in < 0 or self.rho_cross < 0 or self.rho_in + self.rho_cross > 1:
            raise DataError("need rho_in, rho_cross >= 0 and rho_in + rho_cross <= 1")
        if not 0.0 <= self.distractor_fraction < 1.0:
            raise DataError("distractor_fraction must lie in [0, 1)")
        return self


@dataclass
class Batch:
    features: np.ndarray   # (B, |v|)
    labels: np.ndarray     # (B, T) of 0/1
    user_ids: np.ndarray   # (B,)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    user_ids: np.ndarray
    task_names: list

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.task_names == other.task_names
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.user_ids, other.user_ids))

    def positive_rates(self):
        return dict(zip(self.task_names, self.labels.mean(axis=0).tolist()))

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.user_ids[idx], list(self.task_names))

    def as_batch(self):
        return Batch(self.features, self.labels, self.user_ids)

    def batches(self, batch_size, rng=None, drop_last=True):
        """Yield minibatches, shuffled when ``rng`` is given."""
        n = len(self)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        stop = n - n % batch_size if drop_last else n
        for lo in range(0, stop, batch_size):
            idx = order[lo:lo + batch_size]
            yield Batch(self.features[idx], self.labels[idx], self.user_ids[idx])


def split_dataset(ds, eval_fraction, seed=0):
    """Deterministic row split into (train, eval); row order is preserved."""
    if not 0.0 < eval_fraction < 1.0:
        raise DataError("eval_fraction must lie in (0, 1)")
    n = len(ds)
    perm = np.random.default_rng([seed, 7]).permutation(n)
    n_eval = int(round(eval_fraction * n))
    eval_idx = np.sort(perm[:n_eval])
    train_idx = np.sort(perm[n_eval:])
    return ds.subset(train_idx), ds.subset(eval_idx)


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------

class _World:
    """Everything shared by all users: item latents, readouts, projection, biases."""

    def __init__(self, spec):
        k = spec.latent_dim
        rng = np.random.default_rng([spec.seed, 0])
        self.items = rng.normal(size=(spec.n_items, k))
        tasks = spec.tasks
        n_read = len(tasks) + 3
        raw = rng.normal(size=(k, n_read))
        if n_read <= k:
            q, _ = np.linalg.qr(raw)
            readouts = q[:, :n_read]
        else:
            readouts = raw / np.linalg.norm(raw, axis=0)
        a = np.sqrt(1.0 - spec.rho_in - spec.rho_cross)
        b = np.sqrt(spec.rho_in)
        c = np.sqrt(spec.rho_cross)
        cat_col = {"interaction": len(tasks), "watch": len(tasks) + 1}
        self.readout = np.stack([
            a * readouts[:, j] + b * readouts[:, cat_col[t.category]] + c * readouts[:, -1]
            for j, t in enumerate(tasks)
        ], axis=1)  # (k, T)
        self.n_distract = int(round(spec.distractor_fraction * spec.feature_width))
        n_inf = spec.feature_width - self.n_distract
        self.projection = rng.normal(size=(2 * k, n_inf)) / np.sqrt(2 * k)
        self.bias = self._calibrate(spec)

    def scores(self, u, items):
        x = u * items
        # unit-length interaction: a shared magnitude would correlate every task
        x = x * (np.sqrt(x.shape[1]) / np.linalg.norm(x, axis=1, keepdims=True))
        return x @ self.readout

    def _calibrate(self, spec):
        # held-out logs of the dataset's own users (weighted by their log
        # counts): rare-task positives cluster on a few users, so fresh users
        # would miss most of the realised rate's spread
        users = [_user_draw(spec, uid) for uid in range(spec.n_users)]
        counts = np.array([n for n, _ in users], dtype=np.float64)
        latents = np.stack([u for _, u in users])
        rng = np.random.default_rng([spec.seed, 2])
        n = spec.calibration_rows
        u = latents[rng.choice(spec.n_users, size=n, p=counts / counts.sum())]
        it = self.items[rng.integers(spec.n_items, size=n)]
        s = self.scores(u, it) + spec.noise * rng.normal(size=(n, len(spec.tasks)))
        biases = np.empty(len(spec.tasks))
        for j, t in enumerate(spec.tasks):
            col = s[:, j]
            lo, hi = -60.0, 60.0
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if np.mean(col + mid > 0) < t.positive_rate:
                    lo = mid
                else:
                    hi = mid
            rate = np.mean(col + hi > 0)
            if abs(rate - t.positive_rate) > 0.1 * t.positive_rate:
                raise DataError(f"task {t.name!r}: cannot calibrate positive rate {t.positive_rate} "
                                f"(reached {rate:.3g} on {n} calibration rows)")
            biases[j] = hi
        return biases


def _user_draw(spec, uid, rng=None):
    """(log count, latent) of one user; the first draws of its stream."""
    if rng is None:
        rng = np.random.default_rng([spec.seed, 1, uid])
    n = int(rng.integers(spec.logs_min, spec.logs_max + 1))
    return n, rng.normal(size=spec.latent_dim)


def generate_dataset(spec):
    spec.validate()
    world = _World(spec)
    k = spec.latent_dim
    feats, labels, users = [], [], []
    for uid in range(spec.n_users):
        rng = np.random.default_rng([spec.seed, 1, uid])
        n, u = _user_draw(spec, uid, rng)
        items = world.items[rng.integers(spec.n_items, size=n)]
        s = world.scores(u, items) + spec.noise * rng.normal(size=(n, len(spec.tasks))) + world.bias
        view = np.concatenate([np.broadcast_to(u, (n, k)), items], axis=1) @ world.projection
        view = view + spec.view_noise * rng.normal(size=view.shape)
        distract = rng.normal(size=(n, world.n_distract))
        feats.append(np.concatenate([view, distract], axis=1))
        labels.append((s > 0).astype(np.float64))
        users.append(np.full(n, uid, dtype=np.int64))
    return Dataset(np.concatenate(feats), np.concatenate(labels), np.concatenate(users),
                   [t.name for t in spec.tasks])


# --------------------------------------------------------------------------
# file format: header user_id, f_0.., y_<task>..; one row per log
# --------------------------------------------------------------------------

def write_dataset(ds, path):
    width = ds.features.shape[1]
    header = ["user_id"] + [f"f_{j}" for j in range(width)] + [f"y_{t}" for t in ds.task_names]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for uid, f, y in zip(ds.user_ids.tolist(), ds.features.tolist(), ds.labels.astype(np.int64).tolist()):
            fh.write(f"{uid}," + ",".join(map(repr, f)) + "," + ",".join(map(str, y)) + "\n")


def _parse_header(header):
    if not header or header[0] != "user_id":
        raise DataError("line 1: header must start with user_id")
    width = 0
    while 1 + width < len(header) and header[1 + width] == f"f_{width}":
        width += 1
    tasks = []
    for col in header[1 + width:]:
        if not col.startswith("y_") or len(col) == 2:
            raise DataError(f"line 1: unexpected column {col!r}")
        tasks.append(col[2:])
    if width == 0 or not tasks:
        raise DataError("line 1: need at least one f_ column and one y_ column")
    return width, tasks


def read_dataset(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("no header: file is empty")
        width, tasks = _parse_header(header)
        ncol = 1 + width + len(tasks)
        uids, feats, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncol:
                raise DataError(f"line {lineno}: expected {ncol} columns, got {len(row)}")
            try:
                uids.append(int(row[0]))
                feats.append([float(x) for x in row[1:1 + width]])
                y = [int(x) for x in row[1 + width:]]
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            if any(v not in (0, 1) for v in y):
                raise DataError(f"line {lineno}: labels must be 0 or 1, got {y}")
            labels.append(y)
    return Dataset(np.array(feats, dtype=np.float64).reshape(-1, width),
                   np.array(labels, dtype=np.float64).reshape(-1, len(tasks)),
                   np.array(uids, dtype=np.int64), tasks)
