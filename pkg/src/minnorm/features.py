"""Feature expansion: quantile bins, level dummies, pairwise interactions.

The expansion is fitted on one table (bin edges, observed levels, which
interactions survive pruning) and can then be applied unchanged to another,
so training and evaluation designs share columns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError

KINDS = ("continuous", "discrete", "dummy")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    group: str | None = None  # columns sharing a group are never interacted

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"column {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def exclusion_group(self) -> str:
        return self.group if self.group is not None else self.name


@dataclass(frozen=True)
class ExpansionPlan:
    bins_per_continuous: int = 50
    jitter_sd: float = 0.0
    jitter_seed: int = 0
    ordering_seed: int = 0
    num_orderings: int = 5
    intercept: bool = True
    interactions: bool = True

    def __post_init__(self):
        if self.bins_per_continuous < 2:
            raise InputError("bins_per_continuous must be at least 2")
        if self.jitter_sd < 0:
            raise InputError("jitter_sd must be nonnegative")
        if self.num_orderings < 1:
            raise InputError("num_orderings must be at least 1")


@dataclass(frozen=True)
class Binning:
    edges: np.ndarray  # strictly increasing upper edges
    kept: np.ndarray  # bin ids that were occupied when fitted

    def assign(self, x) -> np.ndarray:
        # a value equal to an edge goes to the lower bin
        return np.searchsorted(self.edges, np.asarray(x, dtype=float), side="left")

    def indicators(self, x) -> np.ndarray:
        b = self.assign(x)
        return (b[:, None] == self.kept[None, :]).astype(np.uint8)


def fit_quantile_bins(column, B: int) -> Binning:
    x = np.asarray(column, dtype=float)
    if B < 2:
        raise InputError("need at least two bins")
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise InputError("binning needs a non-empty finite 1-d column")
    edges = np.unique(np.quantile(x, np.arange(1, B) / B))
    b = np.searchsorted(edges, x, side="left")
    kept = np.unique(b)
    if kept.size == 1:
        warnings.warn("constant column: quantile binning produced a single bin", stacklevel=2)
    return Binning(edges=edges, kept=kept)


def quantile_bin(column, B: int) -> np.ndarray:
    """Indicator block (rows x occupied bins) for ``B`` empirical-quantile bins.

    Edges sit at the ``k/B`` quantiles; duplicate edges are merged and empty
    bins dropped, so every row has exactly one 1.
    """
    return fit_quantile_bins(column, B).indicators(column)


@dataclass(frozen=True)
class ExpandedColumn:
    name: str
    kind: str  # intercept | bin | level | dummy | interaction
    sources: tuple[str, ...]
    detail: str = ""


def expand_interactions(dummies, names: Sequence[str], groups: Sequence[str]):
    """Base dummies plus pairwise products across distinct exclusion groups.

    All-zero columns are dropped. Order: surviving base columns sorted by
    name, then products ``a*b`` (``a`` sorting before ``b``) in lexicographic
    order of ``(a, b)``. Column names must be distinct.
    Returns ``(matrix, names, pairs)`` where ``pairs[c]`` is ``(i,)`` or
    ``(i, j)`` in terms of the input columns.
    """
    D = np.asarray(dummies)
    if D.ndim != 2 or D.shape[1] != len(names) or len(names) != len(groups):
        raise InputError("dummies, names and groups must align")
    if not np.all((D == 0) | (D == 1)):
        raise InputError("interaction inputs must be 0/1 columns")
    if len(set(names)) != len(names):
        raise InputError("dummy names must be distinct")
    D = D.astype(np.uint8)
    nz = D.any(axis=0)
    order = sorted((i for i in range(D.shape[1]) if nz[i]), key=lambda i: names[i])
    cols = [D[:, i] for i in order]
    out_names = [names[i] for i in order]
    pairs: list[tuple[int, ...]] = [(i,) for i in order]
    for a_pos, i in enumerate(order):
        for j in order[a_pos + 1:]:
            if groups[i] == groups[j]:
                continue
            prod = D[:, i] & D[:, j]
            if prod.any():
                cols.append(prod)
                out_names.append(f"{names[i]}*{names[j]}")
                pairs.append((i, j))
    M = np.column_stack(cols) if cols else np.zeros((D.shape[0], 0), np.uint8)
    return M, out_names, pairs


def jitter(X, sd: float, seed: int) -> np.ndarray:
    """``X`` plus iid ``N(0, sd^2)`` noise; ``sd = 0`` returns a copy of ``X``."""
    X = np.asarray(X, dtype=float)
    if sd < 0:
        raise InputError("jitter sd must be nonnegative")
    if sd == 0:
        return X.copy()
    return X + np.random.default_rng(seed).normal(0.0, sd, size=X.shape)


def random_ordering(k: int, seed: int | Sequence[int]) -> np.ndarray:
    """Uniform random permutation of ``range(k)`` (numpy's Fisher-Yates shuffle)."""
    if k < 1:
        raise InputError("ordering needs k >= 1")
    return np.random.default_rng(seed).permutation(k)


@dataclass
class FeatureExpansion:
    """A fitted expansion. Build with :func:`fit_expansion`."""

    specs: tuple[ColumnSpec, ...]
    plan: ExpansionPlan
    binnings: dict[str, Binning] = field(default_factory=dict)
    levels: dict[str, np.ndarray] = field(default_factory=dict)
    base_names: list[str] = field(default_factory=list)
    base_groups: list[str] = field(default_factory=list)
    base_info: list[ExpandedColumn] = field(default_factory=list)
    terms: list[tuple[int, ...]] = field(default_factory=list)
    columns: list[ExpandedColumn] = field(default_factory=list)

    def _base_block(self, table: Mapping[str, np.ndarray]) -> np.ndarray:
        blocks = []
        for spec in self.specs:
            x = _column(table, spec.name)
            if spec.kind == "continuous":
                blocks.append(self.binnings[spec.name].indicators(x))
            elif spec.kind == "discrete":
                lv = self.levels[spec.name]
                blocks.append((x[:, None] == lv[None, :]).astype(np.uint8))
            else:
                if not np.all((x == 0) | (x == 1)):
                    raise InputError(f"dummy column {spec.name!r} has values other than 0/1")
                blocks.append(x.astype(np.uint8)[:, None])
        return np.hstack(blocks)

    def transform(self, table: Mapping[str, np.ndarray], jitter_seed: int | None = None) -> np.ndarray:
        """Expanded design for ``table``; jitter uses ``jitter_seed`` (default
        ``plan.jitter_seed``) and never touches the intercept."""
        D = self._base_block(table)
        X = np.empty((D.shape[0], len(self.terms)))
        for c, t in enumerate(self.terms):
            X[:, c] = D[:, t[0]] if len(t) == 1 else D[:, t[0]] & D[:, t[1]]
        seed = self.plan.jitter_seed if jitter_seed is None else jitter_seed
        X = jitter(X, self.plan.jitter_sd, seed)
        if self.plan.intercept:
            X = np.hstack([np.ones((X.shape[0], 1)), X])
        return X

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]


def _column(table: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    if name not in table:
        raise InputError(f"column {name!r} not found in table (have: {', '.join(table)})")
    x = np.asarray(table[name], dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError(f"column {name!r} has non-finite values")
    return x


def fit_expansion(table: Mapping[str, np.ndarray], specs: Sequence[ColumnSpec],
                  plan: ExpansionPlan = ExpansionPlan()) -> FeatureExpansion:
    specs = tuple(specs)
    if not specs:
        raise InputError("no covariate specs given")
    names_seen = [s.name for s in specs]
    if len(set(names_seen)) != len(names_seen):
        raise InputError("covariate specs repeat a column name")
    fx = FeatureExpansion(specs=specs, plan=plan)
    for spec in specs:
        x = _column(table, spec.name)
        g = spec.exclusion_group
        if spec.kind == "continuous":
            bn = fit_quantile_bins(x, plan.bins_per_continuous)
            fx.binnings[spec.name] = bn
            width = len(str(plan.bins_per_continuous - 1))
            lo = np.concatenate([[-np.inf], bn.edges])
            hi = np.concatenate([bn.edges, [np.inf]])
            for b in bn.kept:
                nm = f"{spec.name}[q{b:0{width}d}]"
                fx.base_names.append(nm)
                fx.base_info.append(ExpandedColumn(nm, "bin", (spec.name,), f"({lo[b]:.17g}, {hi[b]:.17g}]"))
        elif spec.kind == "discrete":
            lv = np.unique(x)
            fx.levels[spec.name] = lv
            for v in lv:
                nm = f"{spec.name}={v:g}"
                fx.base_names.append(nm)
                fx.base_info.append(ExpandedColumn(nm, "level", (spec.name,), f"{v:.17g}"))
        else:
            fx.base_names.append(spec.name)
            fx.base_info.append(ExpandedColumn(spec.name, "dummy", (spec.name,)))
        fx.base_groups.extend([g] * (len(fx.base_names) - len(fx.base_groups)))

    D = fx._base_block(table)
    if plan.interactions:
        _, names, terms = expand_interactions(D, fx.base_names, fx.base_groups)
    else:
        keep = [i for i in range(D.shape[1]) if D[:, i].any()]
        names, terms = [fx.base_names[i] for i in keep], [(i,) for i in keep]
    fx.terms = list(terms)
    cols = []
    if plan.intercept:
        cols.append(ExpandedColumn("intercept", "intercept", ()))
    for nm, t in zip(names, terms):
        if len(t) == 1:
            cols.append(fx.base_info[t[0]])
        else:
            a, b = fx.base_info[t[0]], fx.base_info[t[1]]
            cols.append(ExpandedColumn(nm, "interaction", a.sources + b.sources, f"{a.name} x {b.name}"))
    fx.columns = cols
    return fx
