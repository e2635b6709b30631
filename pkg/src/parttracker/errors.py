"""Error types shared across the package.

Two failure families are distinguished so the CLI can map them to
distinct exit codes: bad caller input (shapes, domains, malformed
files) versus numerical breakdown (failed factorization, singular
rescale denominator).
"""


class InvalidInputError(ValueError):
    """Caller passed malformed input: bad shape, domain, or file content."""


class NumericalError(ArithmeticError):
    """A numerical operation broke down (non-PD matrix, singular denominator)."""
