from .logger import setup_logger, get_logger
from .helpers import (
    positive_part, negative_part, jordan_split, max_abs, scaled_tolerance, to_jsonable, write_json
)

__all__ = [
    'setup_logger', 'get_logger', 'positive_part', 'negative_part', 'jordan_split',
    'max_abs', 'scaled_tolerance', 'to_jsonable', 'write_json'
]
