"""Numerical tolerances and the dense-dimension cap.

Tolerances live in a context variable so a caller (typically the CLI) can
override them for one computation without touching global state::

    with override(zero_branch=1e-12):
        p = chain_probability(scenario, facts)
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import os
from collections.abc import Iterator

from .errors import ValidationError

DEFAULT_DIM_CAP = 16384
DIM_CAP_ENV = "RELFACTS_DIM_CAP"


@dataclasses.dataclass(frozen=True)
class Tolerances:
    validation: float = 1e-10
    zero_branch: float = 1e-14
    null_branch: float = 1e-12
    # second eigenvalue allowed in a branch before it counts as entangled
    branch_form: float = 1e-10


_current: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "relfacts_tolerances", default=Tolerances()
)


def tolerances() -> Tolerances:
    return _current.get()


@contextlib.contextmanager
def override(**values: float) -> Iterator[Tolerances]:
    known = {f.name for f in dataclasses.fields(Tolerances)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValidationError(f"unknown tolerance(s): {', '.join(unknown)}")
    for name, value in values.items():
        if not value > 0:
            raise ValidationError(f"tolerance {name} must be positive, got {value!r}")
    token = _current.set(dataclasses.replace(_current.get(), **values))
    try:
        yield _current.get()
    finally:
        _current.reset(token)


def dim_cap() -> int:
    """Largest composite dimension a dense object may have.

    Read from ``RELFACTS_DIM_CAP`` on every call so tests and the CLI can
    change it through the environment.
    """
    raw = os.environ.get(DIM_CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"{DIM_CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValidationError(f"{DIM_CAP_ENV} must be positive, got {cap}")
    return cap
