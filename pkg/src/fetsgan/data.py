"""Sequence datasets: sines synthesis, CSV ingestion, windowing, scaling, batching."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class SeqDataset:
    """Variable-length sequences, each an array of shape (T_i, D)."""

    sequences: list
    ids: list = field(default=None)

    def __post_init__(self):
        self.sequences = [np.asarray(s, dtype=np.float64).reshape(len(s), -1) for s in self.sequences]
        if self.ids is None:
            self.ids = list(range(len(self.sequences)))
        if len(self.ids) != len(self.sequences):
            raise ContractError("ids and sequences differ in length")
        dims = {s.shape[1] for s in self.sequences}
        if len(dims) > 1:
            raise ContractError(f"sequences disagree on feature dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def dim(self):
        return self.sequences[0].shape[1]

    @property
    def lengths(self):
        return [len(s) for s in self.sequences]

    def subset(self, index):
        return SeqDataset([self.sequences[i] for i in index], [self.ids[i] for i in index])

    def map(self, fn):
        return SeqDataset([fn(s) for s in self.sequences], list(self.ids))

    def padded(self, dtype=np.float32):
        """(values, mask) padded to the longest sequence."""
        return pad(self.sequences, dtype)


@dataclass
class SeqBatch:
    values: np.ndarray
    lengths: np.ndarray
    mask: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.lengths)

    @property
    def steps(self):
        return self.values.shape[1]


def pad(sequences, dtype=np.float32):
    lengths = np.array([len(s) for s in sequences])
    T, D = int(lengths.max()), sequences[0].shape[1]
    values = np.zeros((len(sequences), T, D), dtype)
    for i, s in enumerate(sequences):
        values[i, :len(s)] = s
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(dtype)
    return values, mask


@dataclass(frozen=True)
class SinesSpec:
    n: int = 1000
    length: int = 100
    amplitude: tuple = (0.5, 1.5)
    frequency: tuple = (1.0, 10.0)
    phase: tuple = (-math.pi, math.pi)
    seed: int = 0

    def __post_init__(self):
        if self.length < 2:
            raise ContractError("sines length must be >= 2")
        for name in ("amplitude", "frequency", "phase"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ContractError(f"{name} range is empty: ({lo}, {hi})")


def sine_wave(length, amplitude=1.0, frequency=1.0, phase=0.0):
    """A * sin(2 pi f t + phase) sampled at t = j / length, shape (length, 1)."""
    t = np.arange(length) / length
    return (amplitude * np.sin(2 * np.pi * frequency * t + phase))[:, None]


def synth_sines(spec, return_params=False):
    """Draw amplitude, frequency and phase uniformly per sequence."""
    rng = np.random.default_rng(spec.seed)
    amp = rng.uniform(*spec.amplitude, size=spec.n)
    freq = rng.uniform(*spec.frequency, size=spec.n)
    phase = rng.uniform(*spec.phase, size=spec.n)
    seqs = [sine_wave(spec.length, a, f, p) for a, f, p in zip(amp, freq, phase)]
    ds = SeqDataset(seqs)
    if return_params:
        return ds, {"amplitude": amp, "frequency": freq, "phase": phase}
    return ds


class CsvError(ContractError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


def load_csv(path, features=None, id_column=None):
    """Read sequences from a headered CSV.

    Rows sharing ``id_column`` form one sequence, in order of first
    appearance; without an id column the whole file is one series.
    ``features`` defaults to every column except the id. Row numbers in
    errors count data rows from 1 (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvError(f"{path}: empty file") from None
        if id_column and id_column not in header:
            raise CsvError(f"{path}: missing id column {id_column!r}", column=id_column)
        if not features:
            features = [h for h in header if h != id_column]
        for name in features:
            if name not in header:
                raise CsvError(f"{path}: missing column {name!r}", column=name)
        cols = [header.index(name) for name in features]
        id_col = header.index(id_column) if id_column else None

        groups = {}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            values = []
            for name, c in zip(features, cols):
                cell = row[c].strip() if c < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvError(f"{path}: non-numeric value {cell!r} at row {row_no}, column {name!r}",
                                   row=row_no, column=name) from None
                if not math.isfinite(v):
                    raise CsvError(f"{path}: non-finite value {cell!r} at row {row_no}, column {name!r}",
                                   row=row_no, column=name)
                values.append(v)
            key = row[id_col].strip() if id_col is not None else None
            groups.setdefault(key, []).append(values)
    if not groups:
        raise CsvError(f"{path}: no data rows")
    ids = list(groups)
    return SeqDataset([np.array(groups[k]) for k in ids], ids if id_column else [0])


def write_csv(path, dataset, columns, id_column="sequence_id"):
    """Write sequences as long-format rows: id column then feature columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([id_column] + list(columns))
        for sid, seq in zip(dataset.ids, dataset.sequences):
            for row in seq:
                w.writerow([sid] + [repr(float(v)) for v in row])


def slice_windows(series, length, stride=1):
    """Overlapping windows [i*stride, i*stride + length) of one (L, D) series."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if length < 1 or stride < 1:
        raise ContractError("window length and stride must be positive")
    if len(series) < length:
        raise ContractError(f"series of length {len(series)} is shorter than window {length}")
    count = (len(series) - length) // stride + 1
    return SeqDataset([series[i * stride:i * stride + length].copy() for i in range(count)])


def window_dataset(dataset, length, stride=1):
    out = []
    for s in dataset.sequences:
        out += slice_windows(s, length, stride).sequences
    return SeqDataset(out)


@dataclass
class Normalizer:
    """Per-feature affine map of [min, max] onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def apply(self, x):
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo) - 1.0

    def invert(self, y):
        return (np.asarray(y, dtype=np.float64) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo

    def apply_dataset(self, ds):
        return ds.map(self.apply)

    def invert_dataset(self, ds):
        return ds.map(self.invert)

    def to_dict(self):
        return {"min": [float(v) for v in self.lo], "max": [float(v) for v in self.hi]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_normalizer(dataset):
    if len(dataset) == 0:
        raise ContractError("cannot fit a normalizer on an empty dataset")
    stacked = np.concatenate(dataset.sequences, axis=0)
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    flat = (hi - lo) <= 1e-12 * np.maximum(1.0, np.abs(hi))
    # widen degenerate features symmetrically so they map to 0
    half = 1e-6 * np.maximum(1.0, np.abs(lo))
    lo = np.where(flat, lo - half, lo)
    hi = np.where(flat, hi + half, hi)
    return Normalizer(lo, hi)


def batch_iter(dataset, batch_size, seed=None, shuffle=True, dtype=np.float32):
    """Yield padded SeqBatch objects covering every sequence exactly once."""
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = rng.permutation(len(dataset)) if shuffle else np.arange(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        seqs = [dataset.sequences[i] for i in idx]
        values, mask = pad(seqs, dtype)
        yield SeqBatch(values, np.array([len(s) for s in seqs]), mask, idx)


def load_source(source):
    """Materialize a DataSource: sines draw, id-grouped CSV, or windowed single-series CSV."""
    if source.kind == "sines":
        return synth_sines(SinesSpec(source.n, source.length, source.amplitude, source.frequency,
                                     source.phase, source.data_seed))
    ds = load_csv(source.path, source.features or None, source.id_column or None)
    if source.id_column:
        return ds
    return window_dataset(ds, source.window, source.stride)
