"""Error codes shared by every stage of the pipeline."""

from __future__ import annotations

CODES = (
    "FAILS_A1",
    "FAILS_SYMMETRY",
    "FAILS_A2",
    "FAILS_A3",
    "QUADRATURE_UNRESOLVED",
    "RHO_UNDEFINED",
    "GRID_UNDERRESOLVED",
    "SINGULARITY_MISMATCH",
    "SERIES_DIVERGING",
    "NO_FEASIBLE_PARAMS",
    "KERNEL_RANGE",
    "RATE_OVERFLOW",
    "UNSUPPORTED_ALPHA",
    "CONFIG_INVALID",
    "STAGE_FAILED",
    "GRID_MISMATCH",
)


class KernelError(Exception):
    """Failure carrying one of the machine-readable codes in ``CODES``.

    Parameters
    ----------
    code : str
        One of ``CODES``.
    message : str
        Human-readable explanation.
    **details
        Extra diagnostics, serialised into reports.
    """

    def __init__(self, code: str, message: str = "", **details):
        if code not in CODES:
            raise ValueError(f"unknown error code {code!r}")
        self.code = code
        self.details = details
        super().__init__(f"{code}: {message}" if message else code)

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self), "details": self.details}
