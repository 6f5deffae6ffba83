"""Bundled datasets."""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

import numpy as np

from ..cli.ingest import ingest
from ..logistic import BinaryDataset

URINE_COVARIATES = ("gravity", "ph", "osmo", "conduct", "urea", "calc")
C3_ENV = "HOINFER_C3_PATH"


def data_path(name: str) -> Path:
    return Path(str(resources.files("hoinfer") / "data" / name))


def load_urine(interest: str = "urea") -> BinaryDataset:
    """Calcium-oxalate crystal presence for 77 urine specimens.

    The interest covariate forms ``Z``; the intercept and the remaining five
    covariates form ``X``.
    """
    table = ingest(data_path("urine.csv"))
    cols = table.select(("r",) + URINE_COVARIATES)
    others = [c for c in URINE_COVARIATES if c != interest]
    X = np.column_stack([np.ones(len(cols["r"]))] + [cols[c] for c in others])
    return BinaryDataset(cols["r"], X, cols[interest][:, None], ("intercept", *others), (interest,))


def load_sixteen() -> BinaryDataset:
    """Constructed 16-observation binary design on a 4 x 4 factorial.

    Sufficient statistics are ``s = (6, -3)`` for the intercept and ``x`` and
    ``t = -4`` for ``z``.
    """
    table = ingest(data_path("sixteen.csv"))
    c = table.select(("y", "x", "z"))
    X = np.column_stack([np.ones(len(c["y"])), c["x"]])
    return BinaryDataset(c["y"], X, c["z"][:, None], ("intercept", "x"), ("z",))


def c3_path() -> Path:
    """Location of the C3 herbicide data.

    The dataset is not redistributed with the package; point the
    ``HOINFER_C3_PATH`` environment variable at a CSV with columns
    ``dose`` and ``area`` or place ``C3.csv`` in the package data directory.
    """
    env = os.environ.get(C3_ENV)
    if env:
        return Path(env)
    return data_path("C3.csv")


def load_c3() -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dose, area)`` for the C3 herbicide experiment.

    Raises
    ------
    FileNotFoundError
        If the data file is not available.
    """
    path = c3_path()
    if not path.exists():
        raise FileNotFoundError(
            f"C3 data not found at {path}; supply a CSV with columns dose, area via ${C3_ENV}"
        )
    cols = ingest(path).select(("dose", "area"))
    return cols["dose"], cols["area"]
