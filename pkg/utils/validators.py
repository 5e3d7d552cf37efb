import html
import re

import bleach

from utils.errors import ArgumentError

_GRID_SEP = re.compile(r'[,\s]+')

def sanitize_caption(text):
    if not text:
        return ""
    # bleach escapes &, < and >; captions are compared as plain text
    return html.unescape(bleach.clean(str(text), tags=[], strip=True))

def validate_required_fields(data, required_fields):
    missing = []
    for field in required_fields:
        if field not in data or data[field] is None:
            missing.append(field)
    return missing

def parse_int_grid(text):
    """Parse '1,10,100' into a strictly increasing list of positive ints."""
    try:
        values = [int(v) for v in _GRID_SEP.split(text.strip()) if v]
    except ValueError:
        raise ArgumentError(f"not an integer list: {text!r}")
    if not values:
        raise ArgumentError("empty grid")
    if any(v < 1 for v in values):
        raise ArgumentError(f"grid values must be positive: {text!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ArgumentError(f"grid must be strictly increasing: {text!r}")
    return values

def parse_sizes(text, count=None):
    try:
        values = [int(v) for v in _GRID_SEP.split(text.strip()) if v]
    except ValueError:
        raise ArgumentError(f"not an integer list: {text!r}")
    if count is not None and len(values) != count:
        raise ArgumentError(f"expected {count} sizes, got {len(values)}")
    if any(v < 0 for v in values):
        raise ArgumentError(f"sizes must be non-negative: {text!r}")
    return values
