"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed files, out-of-range parameters, schema violations."""


class NumericalError(RuntimeError):
    """Numerical failure during fitting: non-PD precision, ELBO decrease, sampler breakdown."""
