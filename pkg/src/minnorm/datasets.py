"""Synthetic data generators and the small datasets bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from . import fileio
from .ols import RegressionDataset
from .synth import Panel


def sparse_regression(n_train=40, n_eval=200, k=120, n_active=10, noise_sd=1.0, seed=0):
    """Gaussian design, ``n_active`` nonzero coefficients, Gaussian noise.

    Returns ``(train, eval, beta)``.
    """
    rng = np.random.default_rng(seed)
    beta = np.zeros(k)
    active = rng.choice(k, size=n_active, replace=False)
    beta[active] = rng.normal(0.0, 1.0, size=n_active)
    X = rng.normal(size=(n_train + n_eval, k))
    Y = X @ beta + rng.normal(0.0, noise_sd, size=n_train + n_eval)
    names = tuple(f"x{j:03d}" for j in range(k))
    train = RegressionDataset(X[:n_train], Y[:n_train], names)
    eval_ = RegressionDataset(X[n_train:], Y[n_train:], names)
    return train, eval_, beta


def factor_panel(N=12, T=3, S=2, n_factors=2, noise_sd=0.1, level=10.0, seed=0) -> Panel:
    """Interactive fixed effects panel whose target loads on a convex mix of donors."""
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(T + S, n_factors))
    donor_load = rng.uniform(0.0, 1.0, size=(N, n_factors))
    mix = rng.dirichlet(np.ones(N))
    loads = np.vstack([mix @ donor_load, donor_load])
    Y = level + loads @ factors.T + rng.normal(0.0, noise_sd, size=(N + 1, T + S))
    names = ("target",) + tuple(f"donor{i:02d}" for i in range(1, N + 1))
    return Panel(outcomes=Y, T=T, S=S, unit_names=names, period_labels=tuple(str(t) for t in range(1, T + S + 1)))


def raw_covariates(n=60, seed=0) -> dict[str, np.ndarray]:
    """A small table shaped like the earnings data: two discrete columns, four
    dummies (two of them mutually exclusive), two skewed incomes and the outcome."""
    rng = np.random.default_rng(seed)
    age = rng.integers(18, 56, size=n).astype(float)
    education = rng.integers(6, 17, size=n).astype(float)
    race = rng.choice(3, size=n, p=[0.6, 0.25, 0.15])
    married = (rng.random(n) < 0.5).astype(float)
    nodegree = (education < 12).astype(float)
    employed74 = rng.random(n) < 0.7
    re74 = np.where(employed74, np.round(rng.lognormal(9.0, 0.8, size=n), 2), 0.0)
    re75 = np.where(rng.random(n) < 0.8, np.round(0.6 * re74 + rng.lognormal(8.5, 0.9, size=n), 2), 0.0)
    re78 = np.round(np.maximum(0.0, 0.5 * re75 + 400 * (education - 10) + rng.normal(0, 3000, size=n)), 2)
    return {
        "age": age, "education": education,
        "black": (race == 1).astype(float), "hispanic": (race == 2).astype(float),
        "married": married, "nodegree": nodegree,
        "re74": re74, "re75": re75, "re78": re78,
    }


def data_dir() -> Path:
    return Path(str(resources.files("minnorm") / "data"))


def _load_regression(path, outcome="y") -> RegressionDataset:
    t = fileio.read_table(path)
    names = [c for c in t if c != outcome]
    return RegressionDataset(fileio.table_matrix(t, names), t[outcome], tuple(names))


def bundled_regression() -> tuple[RegressionDataset, RegressionDataset]:
    d = data_dir()
    return _load_regression(d / "regression_train.csv"), _load_regression(d / "regression_eval.csv")


def bundled_panel() -> Panel:
    return fileio.read_panel_wide(data_dir() / "factor_panel.csv", target="target", T=3, S=2)


def write_bundled(dest: Path | None = None) -> None:
    """Regenerate the bundled CSVs (run once; the files are versioned)."""
    d = Path(dest) if dest is not None else data_dir()
    train, eval_, _ = sparse_regression()
    for name, ds in (("regression_train.csv", train), ("regression_eval.csv", eval_)):
        cols = [ds.X[:, j] for j in range(ds.k)] + [ds.Y]
        fileio.write_csv(d / name, [*ds.column_names, "y"], cols)
    fileio.write_panel_wide(d / "factor_panel.csv", factor_panel())
    raw = raw_covariates()
    fileio.write_csv(d / "raw_covariates.csv", list(raw), list(raw.values()))
