"""Bundled datasets, golden reference values and brute-force oracles."""

from .datasets import c3_path, data_path, load_c3, load_sixteen, load_urine
from .golden import GoldenRecord, golden, load_golden
from .oracles import (
    FDResult,
    ReferenceSetCounts,
    enumerate_binary_reference_set,
    fd_gradient,
    finite_difference_harness,
    student_t_oracle,
)

__all__ = [
    "FDResult", "GoldenRecord", "ReferenceSetCounts", "c3_path", "data_path", "enumerate_binary_reference_set",
    "fd_gradient", "finite_difference_harness", "golden", "load_c3", "load_golden", "load_sixteen", "load_urine",
    "student_t_oracle",
]
