"""Error type shared across the package.

Every guardable failure carries a short stable ``code`` string so callers
(and the CLI) can branch on it without parsing messages.
"""

from __future__ import annotations


class QRLabError(ValueError):
    """A domain error with a stable short code.

    Codes in use include: empty-path, bad-metric, disconnected-concat,
    surgery-precondition, bounded-path, family-exhausted, degenerate-wall,
    oracle-box, no-walls, stage-overflow, rho-too-small, excursion-too-fast,
    r-too-small, bad-time-profile, strategy-unavailable, profile-inconsistent,
    bad-profile, empty-coset, no-deep-tail, unsupported-presentation,
    config-error, bound-violated.
    """

    def __init__(self, code: str, message: str | None = None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)
