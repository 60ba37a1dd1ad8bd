"""Synthetic multi-source datasets with controllable target shift, CSV
ingestion, and iterate-agnostic batch streams.

Every random draw comes from a generator keyed by (seed, stream tag, ...),
so datasets are byte-identical across runs with the same seed and batch
order never depends on model iterates.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    pass


class CsvFormatError(DataError):
    """Carries the 1-based line number of the offending row."""

    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# stream tags keep independent concerns on independent rng streams
TAG_DOMAIN = 1
TAG_SHIFT = 2
TAG_BATCH = 3


def stream_rng(seed, *key):
    """Deterministic generator for (seed, key...) with independent streams
    for distinct keys."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass
class DomainSpec:
    """Class-conditional diagonal Gaussians: means (c, d), stds (c, d),
    class prior (c,), and sample count."""

    means: np.ndarray
    stds: np.ndarray
    prior: np.ndarray
    size: int

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=np.float64))
        self.prior = np.asarray(self.prior, dtype=np.float64)
        if self.stds.shape != self.means.shape:
            raise DataError("stds must match means in shape")
        if self.prior.shape != (self.means.shape[0],):
            raise DataError("one prior entry per class required")
        if np.min(self.prior) < -1e-9 or abs(self.prior.sum() - 1.0) > 1e-9:
            raise DataError(f"class prior {self.prior} is not a distribution")
        if self.size < 0:
            raise DataError("size must be >= 0")

    @property
    def n_classes(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]


def sample_domain(spec, seed, tag):
    """Draw (X, y) for one domain; deterministic in (seed, tag)."""
    rng = stream_rng(seed, TAG_DOMAIN, tag)
    if spec.size == 0:
        return np.zeros((0, spec.dim)), np.zeros(0, dtype=np.int64)
    y = rng.choice(spec.n_classes, size=spec.size, p=spec.prior)
    x = spec.means[y] + spec.stds[y] * rng.standard_normal((spec.size, spec.dim))
    return x, y


@dataclass
class MultiSourceDataset:
    """N labeled source sets, a labeled target set (possibly empty for the
    pseudo-label regime), and an unlabeled target set."""

    sources: list  # [(X, y), ...]
    target: tuple  # (X, y); size may be 0
    target_unlabeled: np.ndarray
    n_classes: int
    dim: int

    def __post_init__(self):
        if not self.sources or all(x.shape[0] == 0 for x, _ in self.sources):
            raise DataError("need at least one non-empty source")
        for x, y in list(self.sources) + [self.target]:
            if x.shape[0] != y.shape[0]:
                raise DataError("feature/label count mismatch")
            if x.shape[0] and x.shape[1] != self.dim:
                raise DataError(f"feature width {x.shape[1]} != {self.dim}")
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise DataError("label outside the label set")
        if self.target_unlabeled.shape[0] and self.target_unlabeled.shape[1] != self.dim:
            raise DataError("unlabeled feature width mismatch")

    @property
    def source_sizes(self):
        return np.array([x.shape[0] for x, _ in self.sources])


def gen_gaussian_sources(source_specs, target_spec, unlabeled_size=None, seed=0):
    """Sample a MultiSourceDataset from per-domain Gaussian specs.

    The unlabeled target split is drawn from the target spec as a separate
    independent sample (size defaults to the target spec's size).
    """
    sources = [sample_domain(s, seed, tag=i) for i, s in enumerate(source_specs)]
    target = sample_domain(target_spec, seed, tag=1000)
    un_spec = DomainSpec(means=target_spec.means, stds=target_spec.stds,
                         prior=target_spec.prior,
                         size=target_spec.size if unlabeled_size is None else unlabeled_size)
    x_un, _ = sample_domain(un_spec, seed, tag=1001)
    return MultiSourceDataset(sources=sources, target=target, target_unlabeled=x_un,
                              n_classes=target_spec.n_classes, dim=target_spec.dim)


@dataclass
class ShiftSpec:
    """Deterministic class subsampling: keep exactly ceil((1-d) * count) of
    each dropped class, leaving other classes untouched."""

    drop_classes: tuple
    drop_rate: float
    apply_to: str = "sources"
    seed: int = 0

    def __post_init__(self):
        self.drop_classes = tuple(int(c) for c in np.atleast_1d(self.drop_classes))
        if not 0.0 <= self.drop_rate < 1.0:
            raise DataError(f"drop rate {self.drop_rate} outside [0, 1)")
        if self.apply_to not in ("sources", "target"):
            raise DataError(f"apply_to must be 'sources' or 'target'")


def _subsample(x, y, spec, tag):
    rng = stream_rng(spec.seed, TAG_SHIFT, tag)
    keep = np.ones(y.shape[0], dtype=bool)
    for cls in spec.drop_classes:
        idx = np.flatnonzero(y == cls)
        if idx.size == 0:
            continue
        kept = int(np.ceil((1.0 - spec.drop_rate) * idx.size))
        if kept == 0:
            raise DataError(f"class {cls} would be emptied by the shift")
        order = rng.permutation(idx.size)
        keep[idx[order[kept:]]] = False
    sel = np.flatnonzero(keep)
    sel = sel[rng.permutation(sel.size)]
    return x[sel], y[sel]


def apply_target_shift(dataset, spec):
    """Subsample the designated classes on the chosen side; the other side
    is returned untouched."""
    if spec.apply_to == "sources":
        sources = [_subsample(x, y, spec, tag=i) for i, (x, y) in enumerate(dataset.sources)]
        target, unlabeled = dataset.target, dataset.target_unlabeled
    else:
        sources = dataset.sources
        target = _subsample(*dataset.target, spec, tag=2000)
        unlabeled = dataset.target_unlabeled
    return MultiSourceDataset(sources=sources, target=target, target_unlabeled=unlabeled,
                              n_classes=dataset.n_classes, dim=dataset.dim)


# ---------------------------------------------------------------------------
# default desk-scale benchmark


def rotated(points, degrees):
    t = np.radians(degrees)
    r = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return np.asarray(points) @ r.T


def default_benchmark_specs(source_angles=(15.0, 75.0), radius=2.0, std=0.85,
                            size=2000, labeled_target_size=200):
    """Two 2-class, 2-D sources whose class means are rotated relative to
    the target by per-domain angles.  `std` may be a scalar or one value
    per class; distinct spreads make the two classes structurally
    distinguishable beyond their positions."""
    base = np.array([[radius, 0.0], [-radius, 0.0]])
    std = np.broadcast_to(np.atleast_1d(np.asarray(std, dtype=np.float64)), (2,))
    stds = np.repeat(std.reshape(2, 1), 2, axis=1)
    prior = np.array([0.5, 0.5])
    target = DomainSpec(means=base, stds=stds, prior=prior, size=size)
    labeled_target = DomainSpec(means=base, stds=stds, prior=prior, size=labeled_target_size)
    sources = [DomainSpec(means=rotated(base, a), stds=stds, prior=prior, size=size)
               for a in source_angles]
    return sources, target, labeled_target


def default_benchmark(drop_rate=0.5, seed=0, labeled_target=False, **spec_kw):
    """The stock 2-source target-shift benchmark: class 1 is dropped from
    the sources at `drop_rate`, the target is untouched.

    Returns (train dataset, test dataset); the test draw is an independent
    sample of the same distributions (sources shifted identically).
    """
    sources, target, labeled = default_benchmark_specs(**spec_kw)
    if not labeled_target:
        labeled = DomainSpec(means=target.means, stds=target.stds,
                             prior=target.prior, size=0)
    train = gen_gaussian_sources(sources, labeled, unlabeled_size=target.size, seed=seed)
    test = gen_gaussian_sources(sources, target, unlabeled_size=0, seed=seed + 777_000)
    if drop_rate > 0.0:
        shift = ShiftSpec(drop_classes=(1,), drop_rate=drop_rate, apply_to="sources",
                          seed=seed)
        train = apply_target_shift(train, shift)
        test = apply_target_shift(test, shift)
    return train, test


# ---------------------------------------------------------------------------
# CSV ingestion (header: label,f0,f1,...)


def load_csv(path):
    """Parse a labeled feature table; returns (X, y).  Structured errors
    carry the offending 1-based line number."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("missing header row", 1)
        if not header or header[0].strip() != "label":
            raise CsvFormatError("header must start with 'label'", 1)
        width = len(header) - 1
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) - 1 != width:
                raise CsvFormatError(
                    f"expected {width} features, found {len(row) - 1}", line_no)
            try:
                label = int(row[0])
            except ValueError:
                raise CsvFormatError(f"non-integer label {row[0]!r}", line_no)
            try:
                xs.append([float(v) for v in row[1:]])
            except ValueError:
                raise CsvFormatError("unparseable feature value", line_no)
            ys.append(label)
    x = np.asarray(xs, dtype=np.float64).reshape(len(ys), width)
    return x, np.asarray(ys, dtype=np.int64)


def write_csv(path, x, y):
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(x.shape[1])])
        for label, row in zip(np.asarray(y), x):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# batch streams


def epoch_permutation(n, seed, epoch, tag=0):
    """The epoch's data order: a pure function of (seed, epoch, tag)."""
    return stream_rng(seed, TAG_BATCH, tag, epoch).permutation(n)


def epoch_batches(x, y, batch_size, seed, epoch=0, tag=0):
    """Seeded permutation of (x, y) cut into batches; the short final batch
    is kept.  Oversized batch sizes clamp to one full batch with a warning.
    `y` may be None for unlabeled data."""
    n = x.shape[0]
    if batch_size < 1:
        raise DataError("batch size must be >= 1")
    if batch_size > n:
        warnings.warn(f"batch size {batch_size} exceeds set size {n}; using one full batch")
        batch_size = n
    order = epoch_permutation(n, seed, epoch, tag)
    out = []
    for start in range(0, n, batch_size):
        sel = order[start:start + batch_size]
        out.append((x[sel], None if y is None else y[sel]))
    return out


def batch_stream(x, y, batch_size, seed, tag=0):
    """Endless iterator of batches, epoch after epoch; order is a pure
    function of (seed, epoch, step) and never of model state."""
    epoch = 0
    while True:
        yield from epoch_batches(x, y, batch_size, seed, epoch, tag)
        epoch += 1
