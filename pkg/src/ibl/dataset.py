"""Binary-classification datasets: loading, synthesis, preprocessing and splitting."""

from __future__ import annotations

import decimal
from dataclasses import dataclass

import numpy as np
import pandas as pd

CONTINUOUS = "continuous"
ONEHOT = "onehot-indicator"

# Column names tried, in order, when looking for the binary target of a CSV.
TARGET_CANDIDATES = ("target", "survived", "Survived")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable named feature matrix with binary labels.

    ``feature_kinds`` tags each column as continuous or a one-hot indicator;
    ``onehot_groups`` lists, per categorical source column, the indicator
    columns derived from it (used to check the sum-to-one invariant).
    """

    feature_names: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    feature_kinds: tuple[str, ...]
    onehot_groups: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float)
        labels = np.array(self.labels, dtype=int)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        if labels.ndim != 1 or rows.shape[0] != labels.shape[0]:
            raise ValueError("rows and labels must have the same number of entries")
        if rows.shape[1] != len(self.feature_names):
            raise ValueError("every row must have exactly one value per feature name")
        if len(self.feature_kinds) != len(self.feature_names):
            raise ValueError("feature_kinds must match feature_names")
        if not set(np.unique(labels)) <= {0, 1}:
            raise ValueError("labels must be 0 or 1")
        if rows.size and not np.isfinite(rows).all():
            raise ValueError("rows contain missing or non-finite values")
        for kind in self.feature_kinds:
            if kind not in (CONTINUOUS, ONEHOT):
                raise ValueError(f"unknown feature kind: {kind!r}")
        name_to_col = {name: i for i, name in enumerate(self.feature_names)}
        for j, kind in enumerate(self.feature_kinds):
            if kind == ONEHOT and rows.size:
                if not np.isin(rows[:, j], (0.0, 1.0)).all():
                    raise ValueError(f"one-hot feature {self.feature_names[j]!r} has values outside {{0, 1}}")
        for group in self.onehot_groups:
            cols = [name_to_col[name] for name in group]
            if rows.size and not (rows[:, cols].sum(axis=1) == 1.0).all():
                raise ValueError(f"one-hot group {group} does not sum to 1 in every row")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_kinds", tuple(self.feature_kinds))
        object.__setattr__(self, "onehot_groups", tuple(tuple(g) for g in self.onehot_groups))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def row_mapping(self, i: int) -> dict[str, float]:
        """Row ``i`` as a feature-name -> value dict."""
        return dict(zip(self.feature_names, (float(v) for v in self.rows[i])))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows.copy(), columns=list(self.feature_names))

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            feature_names=self.feature_names,
            rows=self.rows[idx],
            labels=self.labels[idx],
            feature_kinds=self.feature_kinds,
            onehot_groups=self.onehot_groups,
        )


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a train set out of a dataset: seeded, sized, class-balanced."""

    seed: int
    n_train: int
    balance: bool = True

    def __post_init__(self) -> None:
        if self.n_train <= 0:
            raise ValueError("n_train must be positive")
        if self.balance and self.n_train % 2 != 0:
            raise ValueError("n_train must be even when balancing classes")


def _is_categorical(series: pd.Series) -> bool:
    # bool columns become True/False indicator pairs, matching how mixed-type
    # tabular sources are usually encoded.
    return (
        series.dtype == object
        or isinstance(series.dtype, pd.CategoricalDtype)
        or pd.api.types.is_bool_dtype(series)
        or pd.api.types.is_string_dtype(series)
    )


def _leaks_target(series: pd.Series, target: pd.Series) -> bool:
    """True when the column is a deterministic, non-constant function of the target."""
    values = series.astype(object).where(series.notna(), "\0missing")
    per_class = values.groupby(target.values).nunique()
    return bool((per_class == 1).all() and values.nunique() > 1)


def load_titanic_csv(path: str, drop_leaky: bool = True) -> Dataset:
    """Load a Titanic-style CSV: mean-impute numerics, one-hot encode categoricals.

    The binary target column is found by name (``target``/``survived``). With
    ``drop_leaky`` set, columns whose values are a deterministic function of
    the target (e.g. an ``alive`` yes/no mirror) are removed before encoding.
    """
    df = pd.read_csv(path)
    if df.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    target_col = next((c for c in TARGET_CANDIDATES if c in df.columns), None)
    if target_col is None:
        raise ValueError(f"{path}: no target column (expected one of {TARGET_CANDIDATES})")
    target = df.pop(target_col)
    if target.isna().any() or not set(pd.unique(target)) <= {0, 1}:
        raise ValueError(f"{path}: target column {target_col!r} is not binary 0/1")
    labels = target.to_numpy(dtype=int)

    if drop_leaky:
        leaky = [c for c in df.columns if _leaks_target(df[c], target)]
        df = df.drop(columns=leaky)

    names: list[str] = []
    kinds: list[str] = []
    groups: list[tuple[str, ...]] = []
    columns: list[np.ndarray] = []
    for col in df.columns:
        series = df[col]
        if _is_categorical(series):
            filled = series.astype(object).where(series.notna(), None)
            counts = pd.Series(filled.dropna()).value_counts().sort_index()
            if counts.empty:
                continue  # entirely missing: nothing to encode
            most_frequent = counts.idxmax()
            filled = filled.where(filled.notna(), most_frequent)
            dummies = pd.get_dummies(filled.astype(str), prefix=col)
            group = tuple(dummies.columns)
            groups.append(group)
            for dummy_col in dummies.columns:
                names.append(dummy_col)
                kinds.append(ONEHOT)
                columns.append(dummies[dummy_col].to_numpy(dtype=float))
        else:
            values = series.to_numpy(dtype=float)
            if np.isnan(values).all():
                raise ValueError(f"{path}: column {col!r} has no present values to impute from")
            mean = float(np.nanmean(values))
            values = np.where(np.isnan(values), mean, values)
            names.append(col)
            kinds.append(CONTINUOUS)
            columns.append(values)

    rows = np.column_stack(columns) if columns else np.empty((len(labels), 0))
    return Dataset(tuple(names), rows, labels, tuple(kinds), tuple(groups))


def generate_moons(n: int, noise_sd: float, seed: int) -> Dataset:
    """Two interleaving half-circles: class 0 on the upper unit semicircle,
    class 1 on the shifted lower one, plus Gaussian coordinate noise."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    outer = np.column_stack([np.cos(t0), np.sin(t0)])
    inner = np.column_stack([1.0 - np.cos(t1), 1.0 - np.sin(t1) - 0.5])
    rows = np.vstack([outer, inner])
    rng = np.random.default_rng(seed)
    rows = rows + rng.normal(0.0, noise_sd, size=rows.shape) if noise_sd > 0 else rows
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return Dataset(("Feature_1", "Feature_2"), rows, labels, (CONTINUOUS, CONTINUOUS))


# Class-conditional Gaussian generator: unit covariance, class means at
# +/- 1.0 along the unit direction (1, -1, 1, -1)/2, so the class-mean gap is
# 2.0 along the informative direction.
PSEUDO_FEATURES = ("a", "b", "c", "d")
PSEUDO_DIRECTION = np.array([0.5, -0.5, 0.5, -0.5])
PSEUDO_SHIFT = 2.0


def generate_pseudo(n: int, seed: int) -> Dataset:
    """Four-feature two-class Gaussian data with a class-dependent mean shift."""
    if n < 2:
        raise ValueError("n must be at least 2")
    n1 = n // 2
    n0 = n - n1
    rng = np.random.default_rng(seed)
    offset = (PSEUDO_SHIFT / 2.0) * PSEUDO_DIRECTION
    x0 = rng.normal(size=(n0, 4)) - offset
    x1 = rng.normal(size=(n1, 4)) + offset
    rows = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    kinds = (CONTINUOUS,) * 4
    return Dataset(PSEUDO_FEATURES, rows, labels, kinds)


def round_half_away(value: float, places: int) -> float:
    """Round to ``places`` decimals with ties going away from zero.

    Works on the shortest decimal rendering of the float, so 1.0005 -> 1.001
    even though the binary value sits a hair below the tie point.
    """
    quantum = decimal.Decimal(1).scaleb(-places)
    return float(decimal.Decimal(repr(float(value))).quantize(quantum, rounding=decimal.ROUND_HALF_UP))


def round_features(ds: Dataset, places: int) -> Dataset:
    """Round every feature value half-away-from-zero; labels are untouched."""
    if places < 0:
        raise ValueError("places must be nonnegative")
    flat = np.array([round_half_away(v, places) for v in ds.rows.ravel()])
    rows = flat.reshape(ds.rows.shape) if ds.rows.size else ds.rows.copy()
    return Dataset(ds.feature_names, rows, ds.labels, ds.feature_kinds, ds.onehot_groups)


def balanced_sample(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Split into a seeded train sample and the remaining rows as test.

    With ``spec.balance`` the train set gets exactly ``n_train/2`` rows of
    each class, drawn without replacement; everything not sampled is test.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.balance:
        k = spec.n_train // 2
        pos = np.flatnonzero(ds.labels == 1)
        neg = np.flatnonzero(ds.labels == 0)
        if len(pos) < k or len(neg) < k:
            raise ValueError(
                f"need {k} rows of each class, have {len(pos)} positive / {len(neg)} negative"
            )
        picks = np.concatenate([rng.choice(pos, size=k, replace=False),
                                rng.choice(neg, size=k, replace=False)])
        train_idx = rng.permutation(picks)
    else:
        if spec.n_train > ds.n_rows:
            raise ValueError(f"n_train={spec.n_train} exceeds dataset size {ds.n_rows}")
        train_idx = rng.choice(ds.n_rows, size=spec.n_train, replace=False)
    test_idx = np.setdiff1d(np.arange(ds.n_rows), train_idx)
    return ds.subset(train_idx), ds.subset(test_idx)


def export_csv(ds: Dataset, path: str) -> None:
    """Write features plus a final ``target`` column of 0/1."""
    frame = ds.to_frame()
    frame["target"] = ds.labels
    frame.to_csv(path, index=False)


def load_csv(path: str, default_label: int | None = None) -> Dataset:
    """Read a dataset exported by :func:`export_csv` (all-numeric features).

    A missing ``target`` column is an error unless ``default_label`` is
    given, in which case every row gets that label; useful for probe data
    where labels are irrelevant.
    """
    df = pd.read_csv(path)
    if "target" not in df.columns:
        if default_label is None:
            raise ValueError(f"{path}: no 'target' column")
        labels = np.full(len(df), default_label, dtype=int)
    else:
        labels = df.pop("target").to_numpy(dtype=int)
    rows = df.to_numpy(dtype=float)
    kinds = (CONTINUOUS,) * rows.shape[1]
    return Dataset(tuple(df.columns), rows, labels, kinds)
