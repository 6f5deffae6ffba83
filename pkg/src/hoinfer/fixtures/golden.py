"""Golden reference values with their tolerances."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from .datasets import data_path


@dataclass(frozen=True)
class GoldenRecord:
    id: str
    quantity: str
    value: Any
    tolerance: dict
    dataset: str | None
    source: str

    def matches(self, computed) -> bool:
        """Whether ``computed`` agrees with the reference value.

        Tolerance kinds: ``last_digit`` (rounded to the printed decimals, at
        most one unit off), ``sig_figs`` (within half a unit of the last
        significant figure kept), ``abs``, ``exact`` and ``range`` (all
        values inside ``[low, high]``, after rounding to ``round`` decimals
        when given, for quantities printed as whole numbers).
        """
        kind = self.tolerance["kind"]
        ref = np.atleast_1d(np.asarray(self.value, float))
        got = np.atleast_1d(np.asarray(computed, float))
        if kind == "range":
            if "round" in self.tolerance:
                got = np.round(got, self.tolerance["round"])
            return bool(np.all((got >= ref[0]) & (got <= ref[1])))
        if got.shape != ref.shape:
            return False
        if kind == "exact":
            return bool(np.array_equal(got, ref))
        if kind == "abs":
            return bool(np.all(np.abs(got - ref) <= self.tolerance["value"]))
        if kind == "last_digit":
            d = self.tolerance["decimals"]
            unit = 10.0 ** -d
            return bool(np.all(np.abs(np.round(got, d) - ref) <= unit * (1 + 1e-9)))
        if kind == "sig_figs":
            digits = self.tolerance["digits"]
            mag = np.floor(np.log10(np.abs(ref)))
            half = 0.5 * 10.0 ** (mag - digits + 1)
            return bool(np.all(np.abs(got - ref) <= half * (1 + 1e-9)))
        raise ValueError(f"unknown tolerance kind {kind!r}")


@lru_cache(maxsize=1)
def load_golden() -> dict[str, GoldenRecord]:
    with open(data_path("golden.json"), encoding="utf-8") as fh:
        raw = json.load(fh)["records"]
    return {r["id"]: GoldenRecord(**r) for r in raw}


def golden(record_id: str) -> GoldenRecord:
    return load_golden()[record_id]
