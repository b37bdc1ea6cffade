"""
Core objects: finite filtered spaces, ladlag processes and split stopping times.
"""

from .probspace import FiniteFilteredSpace, build_space, validate_space, cond_exp_one_step, conditional_expectation
from .laglad import LadlagProcess, NormKind, make_process, constant_process, weighted_norm
from .splitstop import (
    Ordering,
    SplitStoppingTime,
    SplitTimeTable,
    compare,
    count_split_times,
    enumerate_split_times,
    glue,
    lift,
    terminal_split_time,
    validate_sst,
)

__all__ = [
    'FiniteFilteredSpace', 'build_space', 'validate_space', 'cond_exp_one_step', 'conditional_expectation',
    'LadlagProcess', 'NormKind', 'make_process', 'constant_process', 'weighted_norm',
    'Ordering', 'SplitStoppingTime', 'SplitTimeTable', 'compare', 'count_split_times',
    'enumerate_split_times', 'glue', 'lift', 'terminal_split_time', 'validate_sst',
]
