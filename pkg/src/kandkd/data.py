"""Attack-file ingestion, column cleaning, scaling, splitting and the dataset container.

Typical flow::

    table = load_csv(path, "Normal/Attack")
    table = clean_columns(table)
    train, test = prepare(table, test_fraction=0.2)
"""
from __future__ import annotations

import json
import logging
import math
import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

DATASET_MAGIC = b"KDDS"
DATASET_VERSION = 1

METADATA_PATTERN = re.compile(
    r"^(row|index|idx|id|unnamed:?\s*\d*|timestamp|time\s*stamp|time|date|datetime|date\s*/?\s*time)$",
    re.IGNORECASE,
)
ATTACK_PATTERN = re.compile(r"^a\W*t\W*t\W*a\W*c\W*k", re.IGNORECASE)
NORMAL_PATTERN = re.compile(r"^n\W*o\W*r\W*m\W*a\W*l|^no\W*attack", re.IGNORECASE)


class DataError(ValueError):
    """Malformed input data: bad header, unparseable cells, unknown labels."""


class ScalerError(DataError):
    pass


class MissingColumnError(DataError):
    """The requested label column is absent from the header."""


@dataclass(frozen=True)
class RawTable:
    columns: list
    cells: np.ndarray  # float64, NaN marks a missing cell
    label_column: str
    labels: np.ndarray  # uint8, 1 = attack
    label_mapping: dict = field(default_factory=dict)
    metadata_columns: tuple = ()
    dropped: tuple = ()  # (column, reason) pairs

    def __post_init__(self):
        if self.cells.ndim != 2 or self.cells.shape[1] != len(self.columns):
            raise DataError("cell matrix does not match the column list")
        if len(self.labels) != self.cells.shape[0]:
            raise DataError("label vector does not match the row count")


@dataclass(frozen=True)
class ScalerParams:
    mu: np.ndarray
    sigma: np.ndarray
    kind: str = "standard"
    dropped_columns: tuple = ()  # (column, reason) pairs


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list
    scaler: ScalerParams | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if len(self.labels) != len(self.features):
            raise DataError("feature and label row counts differ")
        if self.features.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match the feature count")
        if np.isnan(self.features).any():
            raise DataError("dataset features contain missing values")
        if len(self.labels) and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 (normal) or 1 (attack)")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def single_class(self) -> bool:
        return len(np.unique(self.labels)) < 2


# --------------------------------------------------------------------------- loading


def _map_labels(raw: pd.Series, positive_label_values=None):
    values = raw.astype(str).str.strip()
    if values.eq("").any() or raw.isna().any():
        bad = np.flatnonzero(values.eq("").to_numpy() | raw.isna().to_numpy())
        raise DataError(f"missing label on line(s) {_lines(bad)}")
    uniques = sorted(values.unique())
    if positive_label_values is not None:
        positive = {str(v).strip() for v in positive_label_values}
        mapping = {u: int(u in positive) for u in uniques}
    else:
        mapping = _auto_mapping(uniques)
    return values.map(mapping).to_numpy(dtype=np.uint8), mapping


def _auto_mapping(uniques):
    try:
        numeric = {u: float(u) for u in uniques}
    except ValueError:
        numeric = None
    if numeric is not None:
        vals = set(numeric.values())
        if vals <= {0.0, 1.0}:
            return {u: int(v == 1.0) for u, v in numeric.items()}
        if vals <= {-1.0, 1.0}:
            # -1 marks attack rows in the WADI convention
            return {u: int(v == -1.0) for u, v in numeric.items()}
        raise DataError(f"cannot infer binary labels from numeric values {sorted(vals)}")
    mapping = {}
    for u in uniques:
        if ATTACK_PATTERN.match(u):
            mapping[u] = 1
        elif NORMAL_PATTERN.match(u):
            mapping[u] = 0
        else:
            raise DataError(
                f"label value {u!r} is neither an attack nor a normal marker; "
                "pass positive_label_values explicitly"
            )
    return mapping


def _lines(row_positions, limit=10):
    # header is line 1, first data row is line 2
    shown = ", ".join(str(int(r) + 2) for r in row_positions[:limit])
    more = len(row_positions) - limit
    return shown + (f" (+{more} more)" if more > 0 else "")


def load_csv(path, label_column: str, positive_label_values=None, delimiter: str = ",") -> RawTable:
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True
        )
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file is empty") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if _looks_numeric(frame.columns):
        raise DataError(f"{path}:1: header row missing (first line is all numeric)")
    if label_column not in frame.columns:
        raise MissingColumnError(
            f"{path}: label column {label_column!r} not found; available columns start with "
            f"{list(frame.columns[:5])}"
        )
    labels, mapping = _map_labels(frame[label_column], positive_label_values)
    features = frame.drop(columns=[label_column])
    columns = list(features.columns)
    metadata = tuple(c for c in columns if METADATA_PATTERN.match(c))
    cells = np.empty((len(features), len(columns)))
    for i, name in enumerate(columns):
        text = features[name].str.strip()
        parsed = pd.to_numeric(text.replace({"": None, "nan": None, "NaN": None, "NA": None}), errors="coerce")
        if name not in metadata:
            bad = np.flatnonzero(parsed.isna().to_numpy() & text.ne("").to_numpy()
                                 & ~text.isin(["nan", "NaN", "NA"]).to_numpy())
            if len(bad):
                raise DataError(
                    f"{path}: column {name!r} has unparseable values on line(s) {_lines(bad)}"
                )
        cells[:, i] = parsed.to_numpy(dtype=np.float64)
    return RawTable(columns, cells, label_column, labels, mapping, metadata)


def _looks_numeric(names):
    try:
        for n in names:
            float(n)
    except ValueError:
        return False
    return True


# --------------------------------------------------------------------------- cleaning


def clean_columns(table: RawTable) -> RawTable:
    """Drop metadata, all-missing and constant columns, recording why."""
    keep, dropped = [], list(table.dropped)
    for i, name in enumerate(table.columns):
        col = table.cells[:, i]
        present = col[~np.isnan(col)]
        if name in table.metadata_columns:
            dropped.append((name, "timestamp/index"))
        elif present.size == 0:
            dropped.append((name, "nan-only"))
        elif present.size == 1 or np.all(present == present[0]):
            dropped.append((name, "zero-variance"))
        else:
            keep.append(i)
    if not keep:
        log.warning("clean_columns removed every feature column")
    return replace(
        table,
        columns=[table.columns[i] for i in keep],
        cells=table.cells[:, keep],
        metadata_columns=(),
        dropped=tuple(dropped),
    )


def to_dataset(table: RawTable) -> Dataset:
    """Drop rows with any remaining missing cell; the count lands in ``info``."""
    complete = ~np.isnan(table.cells).any(axis=1)
    n_bad = int((~complete).sum())
    if n_bad:
        log.info("dropping %d rows with scattered missing values", n_bad)
    return Dataset(
        table.cells[complete],
        table.labels[complete],
        list(table.columns),
        info={
            "rows_dropped_missing": n_bad,
            "dropped_columns": [list(d) for d in table.dropped],
            "label_mapping": dict(table.label_mapping),
        },
    )


# --------------------------------------------------------------------------- scaling


def fit_scaler(train_features, kind: str = "standard", dropped_columns=()) -> ScalerParams:
    """Per-column statistics from the training rows only.

    ``standard`` uses the population standard deviation (``ddof=0``);
    ``minmax`` stores the column minimum in ``mu`` and the range in ``sigma``.
    """
    x = np.asarray(train_features, dtype=np.float64)
    if kind == "standard":
        mu, sigma = x.mean(axis=0), x.std(axis=0)
    elif kind == "minmax":
        mu = x.min(axis=0)
        sigma = x.max(axis=0) - mu
    else:
        raise ScalerError(f"unknown scaler {kind!r}")
    if np.any(sigma <= 0):
        cols = np.flatnonzero(sigma <= 0).tolist()
        raise ScalerError(f"zero spread in column(s) {cols}; drop constant columns before scaling")
    return ScalerParams(mu, sigma, kind, tuple(dropped_columns))


def apply_scaler(features, params: ScalerParams) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - params.mu) / params.sigma


# --------------------------------------------------------------------------- splitting


def split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie strictly between 0 and 1, got {test_fraction}")
    # floor on the training side: 449,919 rows at 0.2 -> 359,935 / 89,984
    n_train = math.floor(n * (1.0 - test_fraction) + 1e-9)
    n_test = n - n_train
    if n_train < 1 or n_test < 1:
        raise DataError(f"{n} rows cannot be split at test_fraction={test_fraction}")
    return n_train, n_test


def split_indices(n: int, test_fraction: float = 0.2, seed: int = 0, shuffle: bool = False):
    n_train, _ = split_sizes(n, test_fraction)
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    return order[:n_train], order[n_train:]


def _subset(ds: Dataset, idx) -> Dataset:
    return replace(ds, features=ds.features[idx], labels=ds.labels[idx])


def split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0, shuffle: bool = False):
    train_idx, test_idx = split_indices(len(dataset), test_fraction, seed, shuffle)
    return _subset(dataset, train_idx), _subset(dataset, test_idx)


def random_mask(features, mask_prob: float, seed: int = 0) -> np.ndarray:
    """Zero each cell independently with probability ``mask_prob``."""
    if not 0.0 <= mask_prob < 1.0:
        raise DataError(f"mask_prob must lie in [0, 1), got {mask_prob}")
    x = np.array(features, dtype=np.float64, copy=True)
    if mask_prob == 0.0:
        return x
    hit = np.random.default_rng(seed).random(x.shape) < mask_prob
    x[hit] = 0.0
    return x


def prepare(
    table: RawTable,
    test_fraction: float = 0.2,
    seed: int = 0,
    shuffle: bool = False,
    scaler: str = "standard",
    mask_prob: float = 0.0,
):
    """Clean, split, fit the scaler on the training rows and scale both splits."""
    ds = to_dataset(clean_columns(table))
    train, test = split(ds, test_fraction, seed, shuffle)
    # a column can be constant over the training rows only
    spread = np.ptp(train.features, axis=0) > 0
    if not spread.all():
        dead = [n for n, ok in zip(ds.feature_names, spread) if not ok]
        info = dict(ds.info)
        info["dropped_columns"] = info["dropped_columns"] + [[n, "zero-variance (train split)"] for n in dead]
        names = [n for n, ok in zip(ds.feature_names, spread) if ok]
        train = Dataset(train.features[:, spread], train.labels, names, info=info)
        test = Dataset(test.features[:, spread], test.labels, names, info=info)
    drops = tuple(tuple(d) for d in train.info.get("dropped_columns", ()))
    params = fit_scaler(train.features, scaler, drops)
    train_x = random_mask(apply_scaler(train.features, params), mask_prob, seed)
    test_x = apply_scaler(test.features, params)
    info = dict(train.info, test_fraction=test_fraction, shuffle=shuffle, seed=seed, mask_prob=mask_prob)
    return (
        Dataset(train_x, train.labels, train.feature_names, params, dict(info, split="train")),
        Dataset(test_x, test.labels, test.feature_names, params, dict(info, split="test")),
    )


# --------------------------------------------------------------------------- synthetic data


def gen_synthetic(
    n_normal: int = 18800,
    n_attack: int = 1200,
    n_features: int = 20,
    seed: int = 0,
    n_attack_types: int = 4,
    episode_length: int = 60,
) -> Dataset:
    """Time-ordered sensor-like data with attack episodes.

    Normal rows mix a few latent process factors with a slow periodic drift.
    Each attack episode belongs to one of ``n_attack_types`` signatures; every
    signature offsets the shared sentinel feature and additionally shifts or
    inflates the variance of its own random feature subset.  Episodes are
    spread evenly over the timeline so any contiguous split sees attacks.
    """
    if n_normal < 0 or n_attack < 0 or n_features < 1 or n_normal + n_attack < 1:
        raise DataError("sizes must be non-negative with at least one row and one feature")
    rng = np.random.default_rng(seed)
    n = n_normal + n_attack
    n_latent = max(2, n_features // 4)
    mixing = rng.normal(size=(n_latent, n_features)) / np.sqrt(n_latent)
    latent = rng.normal(size=(n, n_latent))
    t = np.arange(n)
    drift = np.sin(2 * np.pi * t[:, None] / rng.uniform(500, 3000, size=n_features)
                   + rng.uniform(0, 2 * np.pi, size=n_features))
    x = latent @ mixing + 0.5 * rng.normal(size=(n, n_features)) + 0.5 * drift
    labels = np.zeros(n, dtype=np.uint8)

    sentinel = int(rng.integers(n_features))
    sentinel_scale = float(x[:, sentinel].std())
    signatures = []
    subset_size = max(1, n_features // 5)
    for _ in range(n_attack_types):
        feats = rng.choice(n_features, size=subset_size, replace=False)
        shifts = rng.choice([-1.0, 1.0], size=subset_size) * rng.uniform(1.0, 3.0, size=subset_size)
        inflate = rng.uniform(1.0, 3.0, size=subset_size)
        signatures.append((feats, shifts, inflate))

    if n_attack:
        # at least ten episodes when there are enough rows, so small sets still interleave
        n_episodes = max(1, int(round(n_attack / episode_length)), min(10, n_attack // 5))
        lengths = np.full(n_episodes, n_attack // n_episodes)
        lengths[: n_attack % n_episodes] += 1
        segment = n // n_episodes
        for k, length in enumerate(lengths):
            start = k * segment + int(rng.integers(0, max(1, segment - length)))
            rows = slice(start, start + length)
            feats, shifts, inflate = signatures[int(rng.integers(n_attack_types))]
            severity = rng.uniform(0.5, 1.0)
            x[rows, sentinel] += sentinel_scale * (2.0 + 4.0 * severity)
            base = x[rows][:, feats]
            x[rows, feats] = base.mean(axis=0) + (base - base.mean(axis=0)) * inflate + severity * shifts
            labels[rows] = 1
    ds = Dataset(
        x,
        labels,
        [f"s{i:03d}" for i in range(n_features)],
        info={"generator": "synthetic", "seed": seed, "sentinel_feature": sentinel},
    )
    if ds.single_class:
        log.warning("synthetic dataset has a single class")
        ds.info["single_class"] = True
    return ds


# --------------------------------------------------------------------------- container


def save_dataset(ds: Dataset, path) -> Path:
    """Header (JSON) + row-major little-endian float32 features + uint8 labels."""
    header = {
        "format_version": DATASET_VERSION,
        "n_rows": len(ds),
        "n_features": ds.n_features,
        "feature_names": list(ds.feature_names),
        "scaler": None
        if ds.scaler is None
        else {
            "kind": ds.scaler.kind,
            "mu": [float(v) for v in ds.scaler.mu],
            "sigma": [float(v) for v in ds.scaler.sigma],
            "dropped_columns": [list(d) for d in ds.scaler.dropped_columns],
        },
        "info": _jsonable(ds.info),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<II", DATASET_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes())
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise DataError(f"{path}: not a prepared dataset (bad magic)")
    if len(raw) < 12:
        raise DataError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != DATASET_VERSION:
        raise DataError(f"{path}: dataset format version {version}, expected {DATASET_VERSION}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    n, d = header["n_rows"], header["n_features"]
    offset = 12 + hlen
    expected = offset + 4 * n * d + n
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset).reshape(n, d).astype(np.float64)
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset + 4 * n * d).copy()
    sc = header["scaler"]
    scaler = None
    if sc is not None:
        scaler = ScalerParams(
            np.array(sc["mu"]), np.array(sc["sigma"]), sc["kind"],
            tuple(tuple(x) for x in sc["dropped_columns"]),
        )
    return Dataset(feats, labels, header["feature_names"], scaler, header["info"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
